//! Single-writer store: a mutex around [`InventoryState`] plus an append-only
//! NDJSON event log. Each mutation is validated, written, then applied.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::Mutex;

use ewaste_core::device::TelemetryMessage;
use ewaste_core::pricing::PriceTable;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::state::{
    ConservationLine, Event, InventoryError, InventoryState, Order, OrderStatus, PalletItem,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Inventory(#[from] InventoryError),
    #[error("event log I/O: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt event log record at line {line} (byte offset {offset}): {message}")]
    CorruptRecord { line: usize, offset: u64, message: String },
}

/// One line of the event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub ts: i64,
    #[serde(flatten)]
    pub event: Event,
}

/// Rebuilds state from a log. Blank lines are skipped; any other line that
/// fails to parse or apply stops replay with its position.
pub fn replay<R: BufRead>(mut reader: R) -> Result<(InventoryState, u64), StoreError> {
    let mut state = InventoryState::new();
    let mut records = 0;
    let mut offset = 0u64;
    let mut line_no = 0;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            return Ok((state, records));
        }
        line_no += 1;
        let corrupt = |message: String| StoreError::CorruptRecord {
            line: line_no,
            offset,
            message,
        };
        if !buf.iter().all(u8::is_ascii_whitespace) {
            let record: EventRecord = serde_json::from_slice(&buf).map_err(|e| corrupt(e.to_string()))?;
            state.apply(&record.event).map_err(|e| corrupt(e.to_string()))?;
            records += 1;
        }
        offset += n as u64;
    }
}

fn event_ts(event: &Event, now_ms: i64) -> i64 {
    match event {
        Event::TelemetryApplied(m) => m.ts,
        Event::OrderPlaced(o) => o.created_ts,
        _ => now_ms,
    }
}

/// Result of ingesting one telemetry message.
#[derive(Debug, Clone, PartialEq)]
pub enum Ingested {
    Applied(PalletItem),
    Duplicate,
}

struct Inner {
    state: InventoryState,
    log: Option<File>,
    seq: u64,
}

pub struct Store {
    prices: PriceTable,
    inner: Mutex<Inner>,
}

impl Store {
    /// A store without persistence.
    pub fn in_memory(prices: PriceTable) -> Self {
        Self {
            prices,
            inner: Mutex::new(Inner {
                state: InventoryState::new(),
                log: None,
                seq: 0,
            }),
        }
    }

    /// Replays `path` (created if missing) and appends to it from then on.
    pub fn open(path: &Path, prices: PriceTable) -> Result<Self, StoreError> {
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let (state, seq) = replay(BufReader::new(&mut file))?;
        // a final record without its newline must not swallow the next one
        let len = file.metadata()?.len();
        if len > 0 {
            let mut last = [0u8; 1];
            file.seek(SeekFrom::Start(len - 1))?;
            file.read_exact(&mut last)?;
            if last[0] != b'\n' {
                file.write_all(b"\n")?;
            }
        }
        let store = Self {
            prices,
            inner: Mutex::new(Inner {
                state,
                log: Some(file),
                seq,
            }),
        };
        let unpriced = store.unknown_category_events();
        if unpriced > 0 {
            warn!(count = unpriced, "replayed telemetry for categories missing from the price table");
        }
        Ok(store)
    }

    pub fn prices(&self) -> &PriceTable {
        &self.prices
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        self.inner.lock().expect("inventory store poisoned")
    }

    fn commit(inner: &mut Inner, event: Event, now_ms: i64) -> Result<(), StoreError> {
        let record = EventRecord {
            seq: inner.seq + 1,
            ts: event_ts(&event, now_ms),
            event,
        };
        if let Some(log) = inner.log.as_mut() {
            let mut line = serde_json::to_vec(&record).expect("event serializes");
            line.push(b'\n');
            log.write_all(&line)?;
            log.flush()?;
        }
        inner.state.apply(&record.event)?;
        inner.seq = record.seq;
        Ok(())
    }

    pub fn ingest(&self, msg: &TelemetryMessage) -> Result<Ingested, StoreError> {
        let mut inner = self.lock();
        let Some(event) = inner.state.telemetry_event(msg)? else {
            return Ok(Ingested::Duplicate);
        };
        if self.prices.unit_price(&msg.component).is_none() {
            warn!(category = %msg.component, "telemetry for a category without a price");
        }
        Self::commit(&mut inner, event, msg.ts)?;
        let item = inner
            .state
            .components(&self.prices)
            .into_iter()
            .find(|i| i.category == msg.component)
            .expect("category was just stocked");
        Ok(Ingested::Applied(item))
    }

    pub fn place_order(&self, category: &str, quantity: i64, now_ms: i64) -> Result<Order, StoreError> {
        let mut inner = self.lock();
        let event = inner.state.order_event(category, quantity, now_ms, &self.prices)?;
        let Event::OrderPlaced(placed) = &event else {
            unreachable!("order_event yields OrderPlaced")
        };
        let id = placed.order_id.clone();
        Self::commit(&mut inner, event, now_ms)?;
        Ok(inner.state.order(&id).expect("order was just placed"))
    }

    pub fn fulfill_order(&self, order_id: &str, now_ms: i64) -> Result<Order, StoreError> {
        self.transition(order_id, OrderStatus::Fulfilled, now_ms)
    }

    pub fn cancel_order(&self, order_id: &str, now_ms: i64) -> Result<Order, StoreError> {
        self.transition(order_id, OrderStatus::Cancelled, now_ms)
    }

    fn transition(&self, order_id: &str, to: OrderStatus, now_ms: i64) -> Result<Order, StoreError> {
        let mut inner = self.lock();
        let event = inner.state.transition_event(order_id, to)?;
        Self::commit(&mut inner, event, now_ms)?;
        Ok(inner.state.order(order_id).expect("order exists"))
    }

    pub fn order(&self, order_id: &str) -> Option<Order> {
        self.lock().state.order(order_id)
    }

    pub fn orders(&self) -> Vec<Order> {
        self.lock().state.orders()
    }

    pub fn list_components(&self) -> Vec<PalletItem> {
        self.lock().state.components(&self.prices)
    }

    pub fn conservation(&self) -> Vec<ConservationLine> {
        self.lock().state.conservation()
    }

    /// Telemetry messages applied for categories the price table lacks.
    pub fn unknown_category_events(&self) -> u64 {
        self.lock()
            .state
            .categories()
            .filter(|(c, _)| self.prices.unit_price(c).is_none())
            .map(|(_, s)| s.ingested_quantity)
            .sum()
    }

    pub fn snapshot(&self) -> InventoryState {
        self.lock().state.clone()
    }

    /// Number of records written so far (including replayed ones).
    pub fn records(&self) -> u64 {
        self.lock().seq
    }
}
