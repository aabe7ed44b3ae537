use std::io::Write;

use ewaste_core::device::TelemetryMessage;
use ewaste_core::pricing::{load_price_table, PriceTable};
use ewaste_inventory::state::grams_to_micrograms;
use ewaste_inventory::{replay, Ingested, InventoryError, Store, StoreError};
use proptest::prelude::*;

const CATEGORIES: [&str; 3] = ["cable", "circuit_board", "unpriced"];

fn prices() -> PriceTable {
    load_price_table(br#"{"cable": 40.0, "circuit_board": 120.0}"#).unwrap()
}

fn msg(device: usize, category: usize, weight_g: f64, ts: i64) -> TelemetryMessage {
    TelemetryMessage {
        device_id: format!("dev{device}"),
        component: CATEGORIES[category].to_string(),
        confidence: 0.8,
        weight_g,
        ts,
    }
}

#[derive(Debug, Clone)]
enum Op {
    Telemetry { device: usize, category: usize, weight_g: f64, ts: i64 },
    Order { category: usize, quantity: i64 },
    Fulfill(usize),
    Cancel(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (0..2usize, 0..3usize, 0.0..2000.0f64, 0..20i64)
            .prop_map(|(device, category, weight_g, ts)| Op::Telemetry { device, category, weight_g, ts }),
        2 => (0..3usize, -1..4i64).prop_map(|(category, quantity)| Op::Order { category, quantity }),
        1 => (0..8usize).prop_map(Op::Fulfill),
        1 => (0..8usize).prop_map(Op::Cancel),
    ]
}

/// Runs ops against `store`, ignoring business-rule rejections.
fn drive(store: &Store, ops: &[Op]) {
    for (i, op) in ops.iter().enumerate() {
        let now = 1_000 + i as i64;
        let r = match op {
            Op::Telemetry { device, category, weight_g, ts } => {
                store.ingest(&msg(*device, *category, *weight_g, *ts)).map(|_| ())
            }
            Op::Order { category, quantity } => store.place_order(CATEGORIES[*category], *quantity, now).map(|_| ()),
            Op::Fulfill(n) => store.fulfill_order(&format!("ord-{:06}", n + 1), now).map(|_| ()),
            Op::Cancel(n) => store.cancel_order(&format!("ord-{:06}", n + 1), now).map(|_| ()),
        };
        match r {
            Ok(()) | Err(StoreError::Inventory(_)) => {}
            Err(e) => panic!("unexpected store failure: {e}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn replay_equals_live_state(ops in prop::collection::vec(op(), 0..60)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("events.ndjson");
        let live = Store::open(&path, prices()).unwrap();
        drive(&live, &ops);
        let reopened = Store::open(&path, prices()).unwrap();
        prop_assert_eq!(reopened.snapshot(), live.snapshot());
        prop_assert_eq!(reopened.list_components(), live.list_components());
        prop_assert_eq!(reopened.orders(), live.orders());
        prop_assert_eq!(reopened.records(), live.records());
    }

    #[test]
    fn weight_is_conserved_and_quantities_add_up(ops in prop::collection::vec(op(), 0..80)) {
        let store = Store::in_memory(prices());
        drive(&store, &ops);
        let state = store.snapshot();
        for line in store.conservation() {
            prop_assert!(line.holds, "{:?}", line);
            prop_assert!(line.stock_ug >= 0);
        }
        for (category, stock) in state.categories() {
            let ordered: u64 = store
                .orders()
                .iter()
                .filter(|o| o.category == category && o.status != ewaste_inventory::OrderStatus::Cancelled)
                .map(|o| o.quantity)
                .sum();
            prop_assert_eq!(stock.ingested_quantity, stock.quantity + ordered);
        }
    }

    #[test]
    fn redelivery_is_idempotent(
        msgs in prop::collection::vec((0..2usize, 0..3usize, 0.0..2000.0f64, 0..20i64), 1..30),
        dup_mask in prop::collection::vec(any::<bool>(), 30),
    ) {
        let once = Store::in_memory(prices());
        let twice = Store::in_memory(prices());
        for (i, (d, c, w, ts)) in msgs.iter().enumerate() {
            let m = msg(*d, *c, *w, *ts);
            once.ingest(&m).unwrap();
            twice.ingest(&m).unwrap();
            if dup_mask[i] {
                prop_assert_eq!(twice.ingest(&m).unwrap(), Ingested::Duplicate);
            }
        }
        prop_assert_eq!(once.snapshot(), twice.snapshot());
    }
}

#[test]
fn ledger_example_three_then_partial_order() {
    let store = Store::in_memory(prices());
    for ts in 0..4 {
        store.ingest(&msg(0, 1, 500.0, ts)).unwrap();
    }
    let order = store.place_order("circuit_board", 2, 5).unwrap();
    assert_eq!(order.weight_g, 1000.0);
    let item = &store.list_components()[0];
    assert_eq!((item.quantity, item.total_weight_g), (2, 1000.0));
    assert!(matches!(
        store.place_order("circuit_board", 5, 6),
        Err(StoreError::Inventory(InventoryError::InsufficientStock { .. }))
    ));
}

#[test]
fn list_is_a_snapshot() {
    let store = Store::in_memory(prices());
    store.ingest(&msg(0, 0, 10.0, 1)).unwrap();
    let before = store.list_components();
    store.ingest(&msg(0, 0, 10.0, 2)).unwrap();
    assert_eq!(before[0].quantity, 1);
    assert_eq!(store.list_components()[0].quantity, 2);
}

#[test]
fn unknown_category_is_stocked_without_price() {
    let store = Store::in_memory(prices());
    store.ingest(&msg(0, 2, 10.0, 1)).unwrap();
    store.ingest(&msg(0, 2, 10.0, 2)).unwrap();
    let item = &store.list_components()[0];
    assert_eq!(item.category, "unpriced");
    assert_eq!(item.anticipated_cost, None);
    assert_eq!(store.unknown_category_events(), 2);
    let order = store.place_order("unpriced", 1, 3).unwrap();
    assert_eq!(order.amount, None);
}

#[test]
fn empty_log_replays_to_empty_state() {
    let (state, n) = replay(&b""[..]).unwrap();
    assert_eq!(n, 0);
    assert!(state.categories().next().is_none());
}

#[test]
fn truncated_final_line_reports_its_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.ndjson");
    {
        let store = Store::open(&path, prices()).unwrap();
        store.ingest(&msg(0, 0, 10.0, 1)).unwrap();
        store.ingest(&msg(0, 0, 10.0, 2)).unwrap();
    }
    let intact_len = std::fs::metadata(&path).unwrap().len();
    let mut f = std::fs::OpenOptions::new().append(true).open(&path).unwrap();
    f.write_all(br#"{"seq":3,"ts":3,"event":"TelemetryApp"#).unwrap();
    drop(f);
    match Store::open(&path, prices()) {
        Err(StoreError::CorruptRecord { line, offset, .. }) => {
            assert_eq!(line, 3);
            assert_eq!(offset, intact_len);
        }
        Err(e) => panic!("wrong error {e}"),
        Ok(_) => panic!("corrupt log accepted"),
    }
}

#[test]
fn semantically_invalid_record_is_corrupt() {
    let log = concat!(
        r#"{"seq":1,"ts":1,"event":"OrderFulfilled","payload":{"order_id":"ord-000001"}}"#,
        "\n"
    );
    assert!(matches!(
        replay(log.as_bytes()),
        Err(StoreError::CorruptRecord { line: 1, offset: 0, .. })
    ));
}

#[test]
fn log_without_trailing_newline_keeps_appending_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.ndjson");
    {
        let store = Store::open(&path, prices()).unwrap();
        store.ingest(&msg(0, 0, 10.0, 1)).unwrap();
    }
    let mut bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.pop(), Some(b'\n'));
    std::fs::write(&path, &bytes).unwrap();
    {
        let store = Store::open(&path, prices()).unwrap();
        store.ingest(&msg(0, 0, 10.0, 2)).unwrap();
    }
    let store = Store::open(&path, prices()).unwrap();
    let stock = store.snapshot();
    assert_eq!(stock.stock("cable").unwrap().quantity, 2);
    assert_eq!(stock.stock("cable").unwrap().weight_ug, grams_to_micrograms(20.0));
}

#[test]
fn log_records_are_one_json_object_per_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.ndjson");
    let store = Store::open(&path, prices()).unwrap();
    store.ingest(&msg(0, 0, 10.0, 7)).unwrap();
    store.place_order("cable", 1, 99).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["event"], "TelemetryApplied");
    assert_eq!(lines[0]["ts"], 7);
    assert_eq!(lines[1]["event"], "OrderPlaced");
    assert_eq!(lines[1]["seq"], 2);
    assert_eq!(lines[1]["payload"]["weight_ug"], 10_000_000);
}
