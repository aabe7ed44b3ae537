//! One-process end-to-end run: broker, stations, inventory service, orders.

use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use ewaste_core::device::run_station;
use ewaste_core::pricing::Money;
use ewaste_inventory::feed::{self, FeedStats};
use ewaste_inventory::http::{self, Clock, ErrorBody};
use ewaste_inventory::{ConservationLine, Order, OrderStatus, PalletItem, Store};
use ewaste_mqtt::{Broker, BrokerConfig, Client, ClientOptions, QoS};
use serde::Serialize;
use tokio::net::TcpListener;
use tracing::info;

use crate::publisher::MqttPublisher;
use crate::scenario::DemoScenario;

/// Upper bound for the whole run.
pub const DEMO_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationSummary {
    pub device_id: String,
    pub published: usize,
    pub no_detection: usize,
    pub failed_frames: usize,
    pub dropped: usize,
    pub clamped_weights: usize,
}

/// Result of one scripted order. Creation time is left out so that runs
/// compare byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderOutcome {
    pub category: String,
    pub quantity: i64,
    pub http_status: u16,
    pub order_id: Option<String>,
    pub weight_g: Option<f64>,
    pub amount: Option<Money>,
    pub status: Option<OrderStatus>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DemoReport {
    pub stations: Vec<StationSummary>,
    pub ingested_quantity: u64,
    pub components: Vec<PalletItem>,
    pub orders: Vec<OrderOutcome>,
    pub conservation: Vec<ConservationLine>,
    /// `None` when the scenario states no expectations.
    pub expected_matched: Option<bool>,
}

impl DemoReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn conserved(&self) -> bool {
        self.conservation.iter().all(|c| c.holds)
    }
}

pub async fn run_demo(scenario: &DemoScenario, seed: u64) -> Result<DemoReport> {
    tokio::time::timeout(DEMO_TIMEOUT, run(scenario, seed))
        .await
        .map_err(|_| anyhow!("demo did not finish within {DEMO_TIMEOUT:?}"))?
}

async fn run(scenario: &DemoScenario, seed: u64) -> Result<DemoReport> {
    let broker = Broker::new(BrokerConfig::default());
    let broker_addr = broker.spawn_tcp("127.0.0.1:0").await?.to_string();
    info!(%broker_addr, "demo broker up");

    let store = Arc::new(Store::in_memory(scenario.price_table()?));
    let stats = Arc::new(FeedStats::default());
    let (service_client, incoming) = feed::subscribe(&broker_addr, ClientOptions::new("inventory-service")).await?;
    let feed_task = tokio::spawn(feed::run_feed(store.clone(), incoming, stats.clone()));

    let listener = TcpListener::bind("127.0.0.1:0").await?;
    let api_base = format!("http://{}", listener.local_addr()?);
    let (stop_http, http_stopped) = tokio::sync::oneshot::channel::<()>();
    let clock: Clock = Arc::new(|| 0);
    let http_task = tokio::spawn(http::serve(listener, http::router(store.clone(), clock), async {
        let _ = http_stopped.await;
    }));

    let cal = scenario.calibration()?;
    let mut stations = Vec::new();
    for (index, device) in scenario.devices.iter().enumerate() {
        let script = scenario.station_script(index, seed)?;
        let id = device.id.clone();
        let addr = broker_addr.clone();
        stations.push(tokio::spawn(async move {
            let (client, _) = Client::connect_tcp(&addr, ClientOptions::new(&id)).await?;
            let mut publisher = MqttPublisher::new(client.clone(), QoS::AtLeastOnce);
            let report = run_station(&id, &script.events, &cal, &script.detector, &script.names, &mut publisher).await?;
            client.disconnect().await;
            anyhow::Ok(StationSummary {
                device_id: id,
                published: report.published,
                no_detection: report.no_detection,
                failed_frames: report.failed_frames,
                dropped: report.dropped,
                clamped_weights: report.clamped_weights,
            })
        }));
    }
    let mut summaries = Vec::new();
    for task in stations {
        summaries.push(task.await.context("station task panicked")??);
    }

    // every publish was acknowledged by the broker; wait for the service to drain
    let published: u64 = summaries.iter().map(|s| s.published as u64).sum();
    while stats.snapshot().received < published {
        tokio::time::sleep(Duration::from_millis(5)).await;
    }

    let http = reqwest::Client::new();
    let mut orders = Vec::new();
    for o in &scenario.orders {
        let response = http
            .post(format!("{api_base}/orders"))
            .json(&serde_json::json!({ "category": o.category, "quantity": o.quantity }))
            .send()
            .await?;
        let status = response.status();
        let mut outcome = OrderOutcome {
            category: o.category.clone(),
            quantity: o.quantity,
            http_status: status.as_u16(),
            order_id: None,
            weight_g: None,
            amount: None,
            status: None,
            error: None,
        };
        if status.is_success() {
            let order: Order = response.json().await?;
            outcome.order_id = Some(order.order_id);
            outcome.weight_g = Some(order.weight_g);
            outcome.amount = order.amount;
            outcome.status = Some(order.status);
        } else {
            outcome.error = Some(response.json::<ErrorBody>().await?.error);
        }
        orders.push(outcome);
    }
    let components: Vec<PalletItem> = http.get(format!("{api_base}/components")).send().await?.json().await?;

    // orderly shutdown: stations are done, the service drains, the broker stops
    service_client.disconnect().await;
    let _ = feed_task.await;
    let _ = stop_http.send(());
    http_task.await.context("http task panicked")??;
    broker.shutdown();

    let ingested_quantity = store.snapshot().categories().map(|(_, s)| s.ingested_quantity).sum();
    let mut report = DemoReport {
        stations: summaries,
        ingested_quantity,
        components,
        orders,
        conservation: store.conservation(),
        expected_matched: None,
    };
    if let Some(expected) = &scenario.expected {
        let finals = report.components.iter().map(|c| (c.category.clone(), c.quantity)).collect();
        let placed = report.orders.iter().filter(|o| o.http_status == 201).count();
        report.expected_matched = Some(
            report.ingested_quantity == expected.ingested_quantity
                && expected.final_quantities == finals
                && placed == expected.orders_placed
                && report.orders.len() - placed == expected.orders_rejected,
        );
    }
    Ok(report)
}

/// Runs the demo and fails when the scenario's expectations or weight
/// conservation do not hold. The report is returned either way.
pub async fn run_checked(scenario: &DemoScenario, seed: u64) -> Result<(DemoReport, Result<()>)> {
    let report = run_demo(scenario, seed).await?;
    let verdict = if !report.conserved() {
        Err(anyhow!("weight conservation violated"))
    } else if report.expected_matched == Some(false) {
        Err(anyhow!("final inventory differs from the scenario's expected counts"))
    } else {
        Ok(())
    };
    Ok((report, verdict))
}

pub fn ensure_ok(verdict: Result<()>) -> Result<()> {
    match verdict {
        Ok(()) => Ok(()),
        Err(e) => bail!(e),
    }
}
