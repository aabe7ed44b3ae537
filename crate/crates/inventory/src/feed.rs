//! Consumes detection telemetry from the broker into a [`Store`].

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use ewaste_core::device::{TelemetryMessage, ALL_DETECTIONS_FILTER};
use ewaste_mqtt::{Client, ClientError, ClientOptions, Incoming, Message, QoS};
use serde::Serialize;
use tracing::{debug, warn};

use crate::store::{Ingested, Store};

#[derive(Debug, Default)]
pub struct FeedStats {
    pub received: AtomicU64,
    pub applied: AtomicU64,
    pub duplicates: AtomicU64,
    /// Messages that arrived with the MQTT dup flag set.
    pub dup_flagged: AtomicU64,
    pub rejected: AtomicU64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FeedSnapshot {
    pub received: u64,
    pub applied: u64,
    pub duplicates: u64,
    pub dup_flagged: u64,
    pub rejected: u64,
}

impl FeedStats {
    pub fn snapshot(&self) -> FeedSnapshot {
        FeedSnapshot {
            received: self.received.load(Ordering::SeqCst),
            applied: self.applied.load(Ordering::SeqCst),
            duplicates: self.duplicates.load(Ordering::SeqCst),
            dup_flagged: self.dup_flagged.load(Ordering::SeqCst),
            rejected: self.rejected.load(Ordering::SeqCst),
        }
    }
}

/// Handles one delivered message. Malformed payloads and invalid readings
/// are counted and skipped rather than stopping the feed.
pub fn handle_message(store: &Store, message: &Message, stats: &FeedStats) {
    if message.dup {
        stats.dup_flagged.fetch_add(1, Ordering::SeqCst);
    }
    let outcome = TelemetryMessage::from_json_bytes(&message.payload)
        .map_err(|e| e.to_string())
        .and_then(|msg| store.ingest(&msg).map_err(|e| e.to_string()));
    match outcome {
        Ok(Ingested::Applied(item)) => {
            debug!(topic = %message.topic, category = %item.category, quantity = item.quantity, "stock updated");
            stats.applied.fetch_add(1, Ordering::SeqCst);
        }
        Ok(Ingested::Duplicate) => {
            debug!(topic = %message.topic, "duplicate telemetry dropped");
            stats.duplicates.fetch_add(1, Ordering::SeqCst);
        }
        Err(e) => {
            warn!(topic = %message.topic, error = %e, "telemetry rejected");
            stats.rejected.fetch_add(1, Ordering::SeqCst);
        }
    }
    // counted last so that `received` implies the message was handled
    stats.received.fetch_add(1, Ordering::SeqCst);
}

/// Runs until the connection closes.
pub async fn run_feed(store: Arc<Store>, mut incoming: Incoming, stats: Arc<FeedStats>) {
    while let Some(message) = incoming.recv().await {
        handle_message(&store, &message, &stats);
    }
    debug!("telemetry feed ended");
}

/// Connects to the broker and subscribes to every station's detections.
pub async fn subscribe(addr: &str, options: ClientOptions) -> Result<(Client, Incoming), ClientError> {
    let (client, incoming) = Client::connect_tcp(addr, options).await?;
    client.subscribe(&[(ALL_DETECTIONS_FILTER, QoS::AtLeastOnce)]).await?;
    Ok((client, incoming))
}
