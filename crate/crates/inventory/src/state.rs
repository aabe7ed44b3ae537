//! Pure inventory state. Every change is an [`Event`]; `apply` is the only
//! mutator, so live ingestion and log replay go through the same code.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use ewaste_core::device::{TelemetryError, TelemetryMessage};
use ewaste_core::pricing::{quote, Money, PriceTable};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Weights are held as integer micrograms so that conservation is exact.
pub const MICROGRAMS_PER_GRAM: f64 = 1_000_000.0;

pub fn grams_to_micrograms(grams: f64) -> i64 {
    (grams * MICROGRAMS_PER_GRAM).round() as i64
}

pub fn micrograms_to_grams(ug: i64) -> f64 {
    ug as f64 / MICROGRAMS_PER_GRAM
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InventoryError {
    #[error("insufficient stock of {category}: requested {requested}, available {available}")]
    InsufficientStock {
        category: String,
        requested: u64,
        available: u64,
    },
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("order quantity must be at least 1, got {0}")]
    InvalidQuantity(i64),
    #[error("order {0:?} not found")]
    OrderNotFound(String),
    #[error("order {order_id} is {from}; cannot become {to}")]
    InvalidTransition {
        order_id: String,
        from: OrderStatus,
        to: OrderStatus,
    },
    #[error("invalid telemetry: {0}")]
    InvalidTelemetry(#[from] TelemetryError),
    #[error("stock weight of {0} overflows")]
    Overflow(String),
    #[error("order id {0:?} already exists")]
    DuplicateOrder(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderStatus {
    Placed,
    Fulfilled,
    Cancelled,
}

impl fmt::Display for OrderStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OrderStatus::Placed => "placed",
            OrderStatus::Fulfilled => "fulfilled",
            OrderStatus::Cancelled => "cancelled",
        })
    }
}

/// Order as written to the log at placement time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlacedOrder {
    pub order_id: String,
    pub category: String,
    pub quantity: u64,
    pub weight_ug: i64,
    /// `None` when the category has no price.
    pub amount_cents: Option<i64>,
    pub currency_code: String,
    pub created_ts: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", content = "payload")]
pub enum Event {
    TelemetryApplied(TelemetryMessage),
    OrderPlaced(PlacedOrder),
    OrderFulfilled { order_id: String },
    OrderCancelled { order_id: String },
}

/// Per-category counters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stock {
    pub quantity: u64,
    pub weight_ug: i64,
    pub ingested_quantity: u64,
    pub ingested_ug: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalletItem {
    pub category: String,
    pub quantity: u64,
    pub total_weight_g: f64,
    /// Quote over the whole pallet; null when the category is not priced.
    pub anticipated_cost: Option<Money>,
    pub currency_code: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: String,
    pub category: String,
    pub quantity: u64,
    pub weight_g: f64,
    pub amount: Option<Money>,
    pub currency_code: String,
    pub status: OrderStatus,
    pub created_ts: i64,
}

/// Weight balance of one category, in micrograms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConservationLine {
    pub category: String,
    pub ingested_ug: i64,
    pub stock_ug: i64,
    /// Placed and fulfilled orders; cancelled orders returned their weight.
    pub ordered_ug: i64,
    pub holds: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct InventoryState {
    stock: BTreeMap<String, Stock>,
    orders: BTreeMap<String, (PlacedOrder, OrderStatus)>,
    seen: HashSet<(String, i64)>,
    next_order: u64,
}

impl InventoryState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stock(&self, category: &str) -> Option<&Stock> {
        self.stock.get(category)
    }

    pub fn categories(&self) -> impl Iterator<Item = (&str, &Stock)> {
        self.stock.iter().map(|(c, s)| (c.as_str(), s))
    }

    pub fn is_duplicate(&self, msg: &TelemetryMessage) -> bool {
        self.seen.contains(&(msg.device_id.clone(), msg.ts))
    }

    /// `Ok(None)` for a redelivered `(device_id, ts)` pair.
    pub fn telemetry_event(&self, msg: &TelemetryMessage) -> Result<Option<Event>, InventoryError> {
        msg.validate()?;
        if self.is_duplicate(msg) {
            return Ok(None);
        }
        let ug = grams_to_micrograms(msg.weight_g);
        let current = self.stock.get(&msg.component).map_or(0, |s| s.ingested_ug);
        if current.checked_add(ug).is_none() {
            return Err(InventoryError::Overflow(msg.component.clone()));
        }
        Ok(Some(Event::TelemetryApplied(msg.clone())))
    }

    pub fn next_order_id(&self) -> String {
        format!("ord-{:06}", self.next_order + 1)
    }

    pub fn order_event(
        &self,
        category: &str,
        quantity: i64,
        now_ms: i64,
        prices: &PriceTable,
    ) -> Result<Event, InventoryError> {
        let requested = u64::try_from(quantity)
            .ok()
            .filter(|q| *q >= 1)
            .ok_or(InventoryError::InvalidQuantity(quantity))?;
        let stock = self
            .stock
            .get(category)
            .ok_or_else(|| InventoryError::UnknownCategory(category.to_string()))?;
        if stock.quantity < requested {
            return Err(InventoryError::InsufficientStock {
                category: category.to_string(),
                requested,
                available: stock.quantity,
            });
        }
        let weight_ug = pro_rata(stock.weight_ug, requested, stock.quantity);
        let amount_cents = quote(category, micrograms_to_grams(weight_ug), prices)
            .ok()
            .map(|q| q.amount.cents());
        Ok(Event::OrderPlaced(PlacedOrder {
            order_id: self.next_order_id(),
            category: category.to_string(),
            quantity: requested,
            weight_ug,
            amount_cents,
            currency_code: prices.currency_code().to_string(),
            created_ts: now_ms,
        }))
    }

    pub fn transition_event(&self, order_id: &str, to: OrderStatus) -> Result<Event, InventoryError> {
        let (_, status) = self
            .orders
            .get(order_id)
            .ok_or_else(|| InventoryError::OrderNotFound(order_id.to_string()))?;
        if *status != OrderStatus::Placed || to == OrderStatus::Placed {
            return Err(InventoryError::InvalidTransition {
                order_id: order_id.to_string(),
                from: *status,
                to,
            });
        }
        let order_id = order_id.to_string();
        Ok(match to {
            OrderStatus::Fulfilled => Event::OrderFulfilled { order_id },
            _ => Event::OrderCancelled { order_id },
        })
    }

    /// Applies one event. Validation happens before any mutation, so an
    /// error leaves the state untouched.
    pub fn apply(&mut self, event: &Event) -> Result<(), InventoryError> {
        match event {
            Event::TelemetryApplied(msg) => {
                if self.telemetry_event(msg)?.is_none() {
                    // a duplicate in the log is harmless; nothing to do
                    return Ok(());
                }
                let ug = grams_to_micrograms(msg.weight_g);
                let s = self.stock.entry(msg.component.clone()).or_default();
                s.quantity += 1;
                s.weight_ug += ug;
                s.ingested_quantity += 1;
                s.ingested_ug += ug;
                self.seen.insert((msg.device_id.clone(), msg.ts));
            }
            Event::OrderPlaced(order) => {
                if self.orders.contains_key(&order.order_id) {
                    return Err(InventoryError::DuplicateOrder(order.order_id.clone()));
                }
                let quantity = i64::try_from(order.quantity).unwrap_or(i64::MAX);
                let stock = self
                    .stock
                    .get_mut(&order.category)
                    .ok_or_else(|| InventoryError::UnknownCategory(order.category.clone()))?;
                if order.quantity == 0 {
                    return Err(InventoryError::InvalidQuantity(quantity));
                }
                if stock.quantity < order.quantity || stock.weight_ug < order.weight_ug || order.weight_ug < 0 {
                    return Err(InventoryError::InsufficientStock {
                        category: order.category.clone(),
                        requested: order.quantity,
                        available: stock.quantity,
                    });
                }
                stock.quantity -= order.quantity;
                stock.weight_ug -= order.weight_ug;
                self.orders
                    .insert(order.order_id.clone(), (order.clone(), OrderStatus::Placed));
                self.next_order += 1;
            }
            Event::OrderFulfilled { order_id } => {
                self.transition_event(order_id, OrderStatus::Fulfilled)?;
                self.orders.get_mut(order_id).expect("checked").1 = OrderStatus::Fulfilled;
            }
            Event::OrderCancelled { order_id } => {
                self.transition_event(order_id, OrderStatus::Cancelled)?;
                let (order, status) = self.orders.get_mut(order_id).expect("checked");
                *status = OrderStatus::Cancelled;
                let stock = self.stock.get_mut(&order.category).expect("ordered category has stock");
                stock.quantity += order.quantity;
                stock.weight_ug += order.weight_ug;
            }
        }
        Ok(())
    }

    /// Snapshot sorted by category, priced against `prices`.
    pub fn components(&self, prices: &PriceTable) -> Vec<PalletItem> {
        self.stock
            .iter()
            .map(|(category, s)| {
                let total_weight_g = micrograms_to_grams(s.weight_ug);
                PalletItem {
                    category: category.clone(),
                    quantity: s.quantity,
                    total_weight_g,
                    anticipated_cost: quote(category, total_weight_g, prices).ok().map(|q| q.amount),
                    currency_code: prices.currency_code().to_string(),
                }
            })
            .collect()
    }

    pub fn order(&self, order_id: &str) -> Option<Order> {
        self.orders.get(order_id).map(|(o, status)| Order {
            order_id: o.order_id.clone(),
            category: o.category.clone(),
            quantity: o.quantity,
            weight_g: micrograms_to_grams(o.weight_ug),
            amount: o.amount_cents.map(Money::from_cents),
            currency_code: o.currency_code.clone(),
            status: *status,
            created_ts: o.created_ts,
        })
    }

    /// All orders in id order.
    pub fn orders(&self) -> Vec<Order> {
        self.orders.keys().filter_map(|id| self.order(id)).collect()
    }

    pub fn conservation(&self) -> Vec<ConservationLine> {
        self.stock
            .iter()
            .map(|(category, s)| {
                let ordered_ug: i64 = self
                    .orders
                    .values()
                    .filter(|(o, st)| &o.category == category && *st != OrderStatus::Cancelled)
                    .map(|(o, _)| o.weight_ug)
                    .sum();
                ConservationLine {
                    category: category.clone(),
                    ingested_ug: s.ingested_ug,
                    stock_ug: s.weight_ug,
                    ordered_ug,
                    holds: s.ingested_ug == s.weight_ug + ordered_ug,
                }
            })
            .collect()
    }
}

/// `floor(total * part / whole)`; taking all units takes all the weight.
fn pro_rata(total_ug: i64, part: u64, whole: u64) -> i64 {
    let share = i128::from(total_ug) * i128::from(part) / i128::from(whole);
    i64::try_from(share).expect("share never exceeds the total")
}
