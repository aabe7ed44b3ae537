//! Weight-based pricing: a flat per-kilogram rate per component category.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

pub const DEFAULT_CURRENCY: &str = "INR";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    #[error("malformed price table: {0}")]
    MalformedDocument(String),
    #[error("price for {category:?} must be positive, got {price}")]
    NonPositivePrice { category: String, price: f64 },
    #[error("no price for category {0:?}")]
    UnknownCategory(String),
    #[error("weight must be non-negative, got {0}")]
    NegativeWeight(f64),
}

/// Money in minor units (1/100). Serializes as a decimal number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_cents(cents: i64) -> Self {
        Money(cents)
    }

    pub fn cents(self) -> i64 {
        self.0
    }

    /// Rounds to two decimals, ties to even.
    pub fn round_from(value: f64) -> Self {
        Money((value * 100.0).round_ties_even() as i64)
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.as_f64())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        f64::deserialize(deserializer).map(Money::round_from)
    }
}

/// Per-kilogram unit prices keyed by category name.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceTable {
    currency_code: String,
    prices: BTreeMap<String, f64>,
}

impl Default for PriceTable {
    fn default() -> Self {
        Self {
            currency_code: DEFAULT_CURRENCY.to_string(),
            prices: BTreeMap::new(),
        }
    }
}

impl PriceTable {
    pub fn new(
        currency_code: impl Into<String>,
        prices: BTreeMap<String, f64>,
    ) -> Result<Self, PricingError> {
        for (category, price) in &prices {
            if !(price.is_finite() && *price > 0.0) {
                return Err(PricingError::NonPositivePrice {
                    category: category.clone(),
                    price: *price,
                });
            }
        }
        Ok(Self {
            currency_code: currency_code.into(),
            prices,
        })
    }

    pub fn currency_code(&self) -> &str {
        &self.currency_code
    }

    pub fn unit_price(&self, category: &str) -> Option<f64> {
        self.prices.get(category).copied()
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.prices.keys().map(String::as_str)
    }

    /// Flat JSON form accepted by [`load_price_table`].
    pub fn to_json(&self) -> String {
        let mut map = serde_json::Map::new();
        map.insert("currency_code".into(), Value::from(self.currency_code.clone()));
        for (k, v) in &self.prices {
            map.insert(k.clone(), Value::from(*v));
        }
        serde_json::to_string_pretty(&Value::Object(map)).expect("price table serializes")
    }
}

/// Reads a price table: a JSON object of `category: price_per_kg` with an
/// optional `currency_code` entry (defaults to INR).
pub fn load_price_table(bytes: &[u8]) -> Result<PriceTable, PricingError> {
    let value: Value = serde_json::from_slice(bytes)
        .map_err(|e| PricingError::MalformedDocument(e.to_string()))?;
    let Value::Object(map) = value else {
        return Err(PricingError::MalformedDocument("expected a JSON object".into()));
    };

    let mut currency = DEFAULT_CURRENCY.to_string();
    let mut prices = BTreeMap::new();
    for (key, v) in map {
        if key == "currency_code" {
            currency = v
                .as_str()
                .filter(|c| !c.is_empty())
                .ok_or_else(|| PricingError::MalformedDocument("currency_code must be a string".into()))?
                .to_string();
            continue;
        }
        let price = v
            .as_f64()
            .ok_or_else(|| PricingError::MalformedDocument(format!("price for {key:?} is not a number")))?;
        prices.insert(key, price);
    }
    PriceTable::new(currency, prices)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub category: String,
    pub weight_g: f64,
    pub unit_price_per_kg: f64,
    pub amount: Money,
}

/// Prices `weight_g` grams of `category`; the amount is rounded once, here.
pub fn quote(category: &str, weight_g: f64, table: &PriceTable) -> Result<Quote, PricingError> {
    if weight_g.is_nan() || weight_g < 0.0 {
        return Err(PricingError::NegativeWeight(weight_g));
    }
    let unit = table
        .unit_price(category)
        .ok_or_else(|| PricingError::UnknownCategory(category.to_string()))?;
    Ok(Quote {
        category: category.to_string(),
        weight_g,
        unit_price_per_kg: unit,
        amount: Money::round_from(weight_g / 1000.0 * unit),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table() -> PriceTable {
        load_price_table(
            br#"{"circuit_board": 120.0, "sensor": 300.0, "cable": 40.0, "currency_code": "INR"}"#,
        )
        .unwrap()
    }

    #[test]
    fn fixture_table() {
        let t = table();
        assert_eq!(t.len(), 3);
        assert_eq!(t.currency_code(), "INR");
        assert_eq!(t.unit_price("sensor"), Some(300.0));
        assert_eq!(load_price_table(t.to_json().as_bytes()).unwrap(), t);
    }

    #[test]
    fn rejects_non_positive_prices() {
        assert!(matches!(
            load_price_table(br#"{"cable": -1}"#),
            Err(PricingError::NonPositivePrice { .. })
        ));
        assert!(matches!(
            load_price_table(br#"{"cable": 0}"#),
            Err(PricingError::NonPositivePrice { .. })
        ));
        assert!(matches!(
            load_price_table(br#"{"cable": "cheap"}"#),
            Err(PricingError::MalformedDocument(_))
        ));
        assert!(matches!(load_price_table(b"[1]"), Err(PricingError::MalformedDocument(_))));
    }

    #[test]
    fn empty_table_is_valid_but_quotes_fail() {
        let t = load_price_table(b"{}").unwrap();
        assert!(t.is_empty());
        assert_eq!(
            quote("cable", 1.0, &t),
            Err(PricingError::UnknownCategory("cable".into()))
        );
    }

    #[test]
    fn quote_examples() {
        let t = table();
        assert_eq!(quote("sensor", 0.0, &t).unwrap().amount, Money::ZERO);
        assert_eq!(quote("circuit_board", 2500.0, &t).unwrap().amount, Money::from_cents(30000));
        assert_eq!(
            quote("battery", 10.0, &t),
            Err(PricingError::UnknownCategory("battery".into()))
        );
        assert_eq!(quote("cable", -1.0, &t), Err(PricingError::NegativeWeight(-1.0)));
    }

    #[test]
    fn rounding_is_half_even() {
        assert_eq!(Money::round_from(0.125), Money::from_cents(12));
        assert_eq!(Money::round_from(0.375), Money::from_cents(38));
        assert_eq!(Money::from_cents(30000).to_string(), "300.00");
        assert_eq!(Money::from_cents(-5).to_string(), "-0.05");
        assert_eq!(serde_json::to_string(&Money::from_cents(1234)).unwrap(), "12.34");
    }

    proptest! {
        #[test]
        fn near_linear_in_weight(a in 0.0..1e6f64, b in 0.0..1e6f64, price in 0.01..1e4f64) {
            let t = PriceTable::new("INR", [("x".to_string(), price)].into()).unwrap();
            let whole = quote("x", a + b, &t).unwrap().amount.cents();
            let parts = quote("x", a, &t).unwrap().amount.cents() + quote("x", b, &t).unwrap().amount.cents();
            prop_assert!((whole - parts).abs() <= 1);
        }

        #[test]
        fn monotone_in_weight(a in 0.0..1e6f64, b in 0.0..1e6f64, price in 0.01..1e4f64) {
            let t = PriceTable::new("INR", [("x".to_string(), price)].into()).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quote("x", lo, &t).unwrap().amount <= quote("x", hi, &t).unwrap().amount);
        }

        #[test]
        fn one_kilogram_costs_the_unit_price(price in 0.01..1e5f64) {
            let t = PriceTable::new("INR", [("x".to_string(), price)].into()).unwrap();
            prop_assert_eq!(quote("x", 1000.0, &t).unwrap().amount, Money::round_from(price));
        }
    }
}
