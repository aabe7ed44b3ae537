use std::future::Future;

use ewaste_core::device::TelemetryPublisher;
use ewaste_mqtt::{Client, ClientError, QoS};

/// Station transport over the MQTT client.
pub struct MqttPublisher {
    client: Client,
    qos: QoS,
}

impl MqttPublisher {
    pub fn new(client: Client, qos: QoS) -> Self {
        Self { client, qos }
    }
}

impl TelemetryPublisher for MqttPublisher {
    type Error = ClientError;

    fn publish(&mut self, topic: &str, payload: Vec<u8>) -> impl Future<Output = Result<(), ClientError>> + Send {
        let client = self.client.clone();
        let topic = topic.to_string();
        let qos = self.qos;
        async move { client.publish(&topic, payload, qos).await }
    }
}
