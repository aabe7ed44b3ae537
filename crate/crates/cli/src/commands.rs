use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use ewaste_core::dataset::{emit_coco, parse_coco, parse_via, stratified_split, Dataset, SplitConfig};
use ewaste_core::detect::evaluate;
use ewaste_core::detect::parse_predictions;
use ewaste_core::device::{run_station, CalibrationParams};
use ewaste_core::pricing::load_price_table;
use ewaste_core::stats::builtin_report;
use ewaste_inventory::feed::{self, FeedStats};
use ewaste_inventory::http;
use ewaste_inventory::Store;
use ewaste_mqtt::packet::SubackCode;
use ewaste_mqtt::{Broker, BrokerConfig, Client, ClientOptions, QoS};
use tokio::net::TcpListener;
use tracing::warn;

use crate::args::*;
use crate::demo;
use crate::publisher::MqttPublisher;
use crate::scenario::{parse_device_scenario, DemoScenario, BUNDLED_DEMO};

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

fn qos(level: u8) -> QoS {
    QoS::from_u8(level).expect("validated by the argument parser")
}

pub async fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Broker(BrokerCommand::Serve { bind, retry_ms }) => broker_serve(&bind, retry_ms).await,
        Command::Device(DeviceCommand::Run {
            id,
            scenario,
            broker,
            tare,
            scale,
            qos: level,
        }) => device_run(&id, &scenario, &broker.broker, tare, scale, qos(level)).await,
        Command::Service(ServiceCommand::Run {
            broker,
            http,
            store,
            prices,
        }) => service_run(&broker.broker, &http, &store, &prices).await,
        Command::Dataset(DatasetCommand::Split {
            coco,
            via,
            fraction,
            seed,
            strict,
            out_train,
            out_test,
        }) => {
            let dataset = match (coco, via) {
                (Some(p), _) => parse_coco(&read(&p)?)?,
                (None, Some(p)) => parse_via(&read(&p)?)?,
                (None, None) => unreachable!("argument parser requires one input"),
            };
            let config = SplitConfig {
                train_fraction: fraction,
                seed,
                strict,
            };
            let (train, test) = stratified_split(&dataset, &config)?;
            write(&out_train, &emit_coco(&train))?;
            write(&out_test, &emit_coco(&test))?;
            print!("{}", split_summary(&train, &test));
            Ok(())
        }
        Command::Eval(EvalCommand::Map {
            ground_truth,
            predictions,
            iou,
            format,
        }) => {
            if !(iou > 0.0 && iou <= 1.0) {
                bail!("--iou must be in (0, 1]");
            }
            let gt = parse_coco(&read(&ground_truth)?)?;
            let text = String::from_utf8(read(&predictions)?).context("predictions are not UTF-8")?;
            let report = evaluate(&gt, &parse_predictions(&text)?, iou)?;
            match format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(())
        }
        Command::Stats(StatsCommand::Report { format }) => {
            let report = builtin_report();
            match format {
                Format::Text => print!("{}", report.to_text()),
                Format::Json => println!("{}", serde_json::to_string_pretty(&report)?),
            }
            Ok(())
        }
        Command::Client(ClientCommand::Sub {
            broker,
            topic,
            qos: level,
            count,
        }) => client_sub(&broker.broker, &topic, qos(level), count).await,
        Command::Client(ClientCommand::Pub {
            broker,
            topic,
            payload,
            qos: level,
        }) => {
            let id = format!("ewaste-pub-{}", std::process::id());
            let (client, _) = Client::connect_tcp(&broker.broker, ClientOptions::new(id)).await?;
            client.publish(&topic, payload.into_bytes(), qos(level)).await?;
            client.disconnect().await;
            Ok(())
        }
        Command::Demo(DemoArgs { scenario, seed }) => {
            let bytes = match scenario {
                Some(p) => read(&p)?,
                None => BUNDLED_DEMO.as_bytes().to_vec(),
            };
            let scenario = DemoScenario::parse(&bytes)?;
            let (report, verdict) = demo::run_checked(&scenario, seed).await?;
            print!("{}", report.to_json());
            demo::ensure_ok(verdict)
        }
    }
}

fn split_summary(train: &Dataset, test: &Dataset) -> String {
    let mut out = String::new();
    for (name, d) in [("train", train), ("test", test)] {
        out.push_str(&format!(
            "{name}: {} images, {} annotations\n",
            d.images().len(),
            d.annotations().len()
        ));
        for c in d.categories() {
            let n = d.annotations().iter().filter(|a| a.category_id == c.id).count();
            out.push_str(&format!("  {:<24} {n}\n", c.name));
        }
    }
    out
}

async fn broker_serve(bind: &str, retry_ms: u64) -> Result<()> {
    if retry_ms == 0 {
        bail!("--retry-ms must be positive");
    }
    let broker = Broker::new(BrokerConfig {
        retry_interval: Duration::from_millis(retry_ms),
        ..BrokerConfig::default()
    });
    let listener = TcpListener::bind(bind).await.with_context(|| format!("cannot bind {bind}"))?;
    eprintln!("broker listening on {}", listener.local_addr()?);
    tokio::select! {
        r = broker.serve(listener) => r?,
        _ = tokio::signal::ctrl_c() => broker.shutdown(),
    }
    Ok(())
}

async fn device_run(id: &str, scenario: &Path, broker: &str, tare: f64, scale: f64, qos: QoS) -> Result<()> {
    let cal = CalibrationParams::new(tare, scale)?;
    let script = parse_device_scenario(&read(scenario)?)?;
    let (client, _) = Client::connect_tcp(broker, ClientOptions::new(id))
        .await
        .with_context(|| format!("cannot connect to broker at {broker}"))?;
    let mut publisher = MqttPublisher::new(client.clone(), qos);
    let report = run_station(id, &script.events, &cal, &script.detector, &script.names, &mut publisher).await?;
    client.disconnect().await;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if report.dropped > 0 {
        bail!("{} message(s) could not be published", report.dropped);
    }
    Ok(())
}

async fn service_run(broker: &str, http_addr: &str, store_path: &Path, prices_path: &Path) -> Result<()> {
    let prices = load_price_table(&read(prices_path)?)
        .with_context(|| format!("invalid price table {}", prices_path.display()))?;
    let store = Arc::new(Store::open(store_path, prices)?);
    let listener = TcpListener::bind(http_addr)
        .await
        .with_context(|| format!("cannot bind {http_addr}"))?;
    eprintln!("inventory API on http://{}", listener.local_addr()?);

    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let api = tokio::spawn(http::serve(listener, http::router(store.clone(), http::system_clock()), async {
        let _ = stop_rx.await;
    }));

    let broker = broker.to_string();
    let stats = Arc::new(FeedStats::default());
    let feed_task = tokio::spawn(async move {
        loop {
            match feed::subscribe(&broker, ClientOptions::new("inventory-service")).await {
                Ok((_client, incoming)) => {
                    eprintln!("subscribed to telemetry on {broker}");
                    feed::run_feed(store.clone(), incoming, stats.clone()).await;
                    warn!("broker connection lost; reconnecting");
                }
                Err(e) => warn!(error = %e, %broker, "cannot reach broker; retrying"),
            }
            tokio::time::sleep(Duration::from_secs(2)).await;
        }
    });

    tokio::signal::ctrl_c().await?;
    feed_task.abort();
    let _ = stop_tx.send(());
    api.await??;
    Ok(())
}

async fn client_sub(broker: &str, topics: &[String], qos: QoS, count: Option<usize>) -> Result<()> {
    let id = format!("ewaste-sub-{}", std::process::id());
    let (client, mut incoming) = Client::connect_tcp(broker, ClientOptions::new(id)).await?;
    let filters: Vec<(&str, QoS)> = topics.iter().map(|t| (t.as_str(), qos)).collect();
    let granted = client.subscribe(&filters).await?;
    if let Some(i) = granted.iter().position(|c| *c == SubackCode::Failure) {
        bail!("broker rejected subscription {:?}", topics[i]);
    }
    let mut seen = 0;
    while count.is_none_or(|n| seen < n) {
        let Some(m) = incoming.recv().await else {
            bail!("connection closed by broker");
        };
        println!("{}\t{}", m.topic, String::from_utf8_lossy(&m.payload));
        seen += 1;
    }
    client.disconnect().await;
    Ok(())
}
