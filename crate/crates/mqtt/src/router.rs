use std::collections::BTreeMap;

use crate::packet::{Publish, QoS};
use crate::topic::TopicFilter;

/// One outbound copy of a publish.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Delivery {
    pub client_id: String,
    pub qos: QoS,
}

/// Subscription table keyed by client id.
#[derive(Debug, Clone, Default)]
pub struct SubscriptionTable {
    sessions: BTreeMap<String, Vec<(TopicFilter, QoS)>>,
}

impl SubscriptionTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds or replaces (same filter string) a subscription; returns the
    /// granted QoS.
    pub fn subscribe(&mut self, client_id: &str, filter: TopicFilter, qos: QoS) -> QoS {
        let subs = self.sessions.entry(client_id.to_string()).or_default();
        match subs.iter_mut().find(|(f, _)| f == &filter) {
            Some(existing) => existing.1 = qos,
            None => subs.push((filter, qos)),
        }
        qos
    }

    pub fn remove_session(&mut self, client_id: &str) {
        self.sessions.remove(client_id);
    }

    pub fn subscriptions(&self, client_id: &str) -> &[(TopicFilter, QoS)] {
        self.sessions.get(client_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.values().all(Vec::is_empty)
    }

    /// Every session with at least one matching subscription receives one
    /// copy, at `min(publish qos, highest matching subscription qos)`.
    /// Deliveries come out ordered by client id.
    pub fn route(&self, publish: &Publish) -> Vec<Delivery> {
        self.sessions
            .iter()
            .filter_map(|(client_id, subs)| {
                let best = subs
                    .iter()
                    .filter(|(f, _)| f.matches(&publish.topic))
                    .map(|(_, q)| *q)
                    .max()?;
                Some(Delivery {
                    client_id: client_id.clone(),
                    qos: best.min(publish.qos),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filter(s: &str) -> TopicFilter {
        TopicFilter::parse(s).unwrap()
    }

    #[test]
    fn fans_out_to_every_matching_session() {
        let mut t = SubscriptionTable::new();
        t.subscribe("inventory", filter("ewaste/+/detections"), QoS::AtLeastOnce);
        t.subscribe("dashboard", filter("ewaste/#"), QoS::AtLeastOnce);
        t.subscribe("other", filter("weather/#"), QoS::AtLeastOnce);
        let p = Publish::at_least_once("ewaste/dev1/detections", b"{}".to_vec(), 1);
        let d = t.route(&p);
        assert_eq!(
            d.iter().map(|d| d.client_id.as_str()).collect::<Vec<_>>(),
            vec!["dashboard", "inventory"]
        );
    }

    #[test]
    fn delivery_qos_is_the_minimum() {
        let mut t = SubscriptionTable::new();
        t.subscribe("s", filter("a"), QoS::AtMostOnce);
        let d = t.route(&Publish::at_least_once("a", vec![], 1));
        assert_eq!(d, vec![Delivery { client_id: "s".into(), qos: QoS::AtMostOnce }]);

        t.subscribe("q1", filter("a"), QoS::AtLeastOnce);
        let d = t.route(&Publish::at_most_once("a", vec![]));
        assert!(d.iter().all(|d| d.qos == QoS::AtMostOnce));
    }

    #[test]
    fn overlapping_filters_deliver_once_at_highest_qos() {
        let mut t = SubscriptionTable::new();
        t.subscribe("s", filter("a/+"), QoS::AtMostOnce);
        t.subscribe("s", filter("a/#"), QoS::AtLeastOnce);
        let d = t.route(&Publish::at_least_once("a/b", vec![], 1));
        assert_eq!(d, vec![Delivery { client_id: "s".into(), qos: QoS::AtLeastOnce }]);
    }

    #[test]
    fn resubscribing_replaces_qos() {
        let mut t = SubscriptionTable::new();
        t.subscribe("s", filter("a"), QoS::AtLeastOnce);
        t.subscribe("s", filter("a"), QoS::AtMostOnce);
        assert_eq!(t.subscriptions("s").len(), 1);
        assert_eq!(t.subscriptions("s")[0].1, QoS::AtMostOnce);
    }

    #[test]
    fn no_subscribers_no_deliveries() {
        let t = SubscriptionTable::new();
        assert!(t.route(&Publish::at_most_once("a", vec![])).is_empty());
        assert!(t.is_empty());
    }
}
