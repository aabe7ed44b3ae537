//! Pallet inventory for detected e-waste components.
//!
//! Telemetry from weighing stations accumulates per-category stock; customers
//! order whole units, taking a pro-rata share of the pallet weight. All state
//! changes are events in an append-only log, so a restart replays to the same
//! state.

pub mod feed;
pub mod http;
pub mod state;
pub mod store;

pub use state::{ConservationLine, Event, InventoryError, InventoryState, Order, OrderStatus, PalletItem};
pub use store::{replay, EventRecord, Ingested, Store, StoreError};
