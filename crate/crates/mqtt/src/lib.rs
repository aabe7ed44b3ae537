//! A small MQTT 3.1.1 broker and client: QoS 0 and 1, clean sessions only.

pub mod broker;
pub mod client;
pub mod framed;
pub mod packet;
pub mod router;
pub mod topic;

pub use broker::{Broker, BrokerConfig, BrokerMetrics, DEFAULT_RETRY_INTERVAL};
pub use client::{Client, ClientError, ClientOptions, FaultInjection, Incoming, Message};
pub use packet::{Packet, Publish, QoS};
pub use topic::{topic_matches, TopicError, TopicFilter};
