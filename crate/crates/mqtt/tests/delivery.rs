use std::sync::atomic::Ordering;
use std::time::Duration;

use ewaste_mqtt::framed::{write_packet, PacketReader, DEFAULT_MAX_PACKET};
use ewaste_mqtt::packet::{Connect, ConnectReturnCode, Packet, Publish, SubackCode};
use ewaste_mqtt::{Broker, BrokerConfig, Client, ClientError, ClientOptions, FaultInjection, QoS};
use tokio::io::{duplex, DuplexStream, ReadHalf, WriteHalf};
use tokio::time::timeout;

const WAIT: Duration = Duration::from_secs(5);

async fn tcp_broker(config: BrokerConfig) -> (Broker, String) {
    let broker = Broker::new(config);
    let addr = broker.spawn_tcp("127.0.0.1:0").await.unwrap();
    (broker, addr.to_string())
}

async fn client(addr: &str, id: &str) -> (Client, ewaste_mqtt::Incoming) {
    Client::connect_tcp(addr, ClientOptions::new(id)).await.unwrap()
}

/// A hand-driven MQTT peer over an in-memory pipe.
struct RawPeer {
    reader: PacketReader<ReadHalf<DuplexStream>>,
    writer: WriteHalf<DuplexStream>,
}

impl RawPeer {
    fn new(stream: DuplexStream) -> Self {
        let (rd, writer) = tokio::io::split(stream);
        Self {
            reader: PacketReader::new(rd, DEFAULT_MAX_PACKET),
            writer,
        }
    }

    async fn send(&mut self, p: Packet) {
        write_packet(&mut self.writer, &p).await.unwrap();
    }

    async fn recv(&mut self) -> Packet {
        timeout(WAIT, self.reader.next()).await.expect("peer timed out").unwrap().expect("stream closed")
    }
}

fn connect(id: &str) -> Packet {
    Packet::Connect(Connect {
        client_id: id.into(),
        keep_alive_s: 0,
        clean_session: true,
    })
}

#[tokio::test]
async fn fan_out_preserves_per_publisher_order() {
    let (broker, addr) = tcp_broker(BrokerConfig::default()).await;
    let (sub_a, mut in_a) = client(&addr, "sub-a").await;
    let (sub_b, mut in_b) = client(&addr, "sub-b").await;
    sub_a.subscribe(&[("ewaste/+/detections", QoS::AtLeastOnce)]).await.unwrap();
    let granted = sub_b.subscribe(&[("ewaste/#", QoS::AtMostOnce)]).await.unwrap();
    assert_eq!(granted, vec![SubackCode::Granted(QoS::AtMostOnce)]);
    assert!(matches!(
        sub_b.subscribe(&[("bad/#/filter", QoS::AtMostOnce)]).await,
        Err(ClientError::Topic(_))
    ));

    let (publisher, _) = client(&addr, "dev1").await;
    for i in 0..50u32 {
        publisher
            .publish("ewaste/dev1/detections", i.to_be_bytes(), QoS::AtLeastOnce)
            .await
            .unwrap();
    }
    publisher.publish("other/topic", b"x".to_vec(), QoS::AtLeastOnce).await.unwrap();

    for (incoming, qos) in [(&mut in_a, QoS::AtLeastOnce), (&mut in_b, QoS::AtMostOnce)] {
        for i in 0..50u32 {
            let m = timeout(WAIT, incoming.recv()).await.unwrap().unwrap();
            assert_eq!(m.topic, "ewaste/dev1/detections");
            assert_eq!(m.payload, i.to_be_bytes());
            assert_eq!(m.qos, qos);
            assert!(!m.dup);
        }
    }
    tokio::time::sleep(Duration::from_millis(50)).await;
    assert!(in_a.try_recv().is_none());
    assert!(in_b.try_recv().is_none());
    assert_eq!(broker.metrics().publishes_received.load(Ordering::Relaxed), 51);
    assert_eq!(broker.metrics().deliveries.load(Ordering::Relaxed), 100);
    broker.shutdown();
}

#[tokio::test]
async fn publisher_also_receives_its_own_matching_publish() {
    let (broker, addr) = tcp_broker(BrokerConfig::default()).await;
    let (c, mut incoming) = client(&addr, "echo").await;
    c.subscribe(&[("t", QoS::AtMostOnce)]).await.unwrap();
    c.publish("t", b"1".to_vec(), QoS::AtMostOnce).await.unwrap();
    let m = timeout(WAIT, incoming.recv()).await.unwrap().unwrap();
    assert_eq!(m.payload, b"1");
    c.disconnect().await;
    broker.shutdown();
}

#[tokio::test]
async fn reconnecting_client_id_takes_over_the_session() {
    let (broker, addr) = tcp_broker(BrokerConfig::default()).await;
    let (first, mut first_in) = client(&addr, "same").await;
    first.subscribe(&[("t", QoS::AtLeastOnce)]).await.unwrap();

    let (second, mut second_in) = client(&addr, "same").await;
    // the old connection is closed by the broker
    assert_eq!(timeout(WAIT, first_in.recv()).await.unwrap(), None);
    assert!(matches!(
        first.publish("t", b"x".to_vec(), QoS::AtLeastOnce).await,
        Err(ClientError::ConnectionClosed)
    ));
    assert_eq!(broker.metrics().takeovers.load(Ordering::Relaxed), 1);
    assert_eq!(broker.connected_clients(), vec!["same".to_string()]);

    // clean session: the old subscription is gone
    let (p, _) = client(&addr, "pub").await;
    p.publish("t", b"lost".to_vec(), QoS::AtLeastOnce).await.unwrap();
    second.subscribe(&[("t", QoS::AtLeastOnce)]).await.unwrap();
    p.publish("t", b"kept".to_vec(), QoS::AtLeastOnce).await.unwrap();
    let m = timeout(WAIT, second_in.recv()).await.unwrap().unwrap();
    assert_eq!(m.payload, b"kept");
    broker.shutdown();
}

#[tokio::test]
async fn broker_resends_unacknowledged_delivery_with_dup() {
    let broker = Broker::new(BrokerConfig {
        retry_interval: Duration::from_millis(100),
        ..BrokerConfig::default()
    });
    let (ours, theirs) = duplex(4096);
    let b = broker.clone();
    tokio::spawn(async move { b.handle_connection(theirs, None).await });
    let mut peer = RawPeer::new(ours);
    peer.send(connect("raw-sub")).await;
    assert!(matches!(peer.recv().await, Packet::ConnAck { code: ConnectReturnCode::Accepted, .. }));
    peer.send(Packet::Subscribe {
        packet_id: 1,
        filters: vec![("x/#".into(), QoS::AtLeastOnce), ("bad/#/filter".into(), QoS::AtLeastOnce)],
    })
    .await;
    assert_eq!(
        peer.recv().await,
        Packet::SubAck {
            packet_id: 1,
            codes: vec![SubackCode::Granted(QoS::AtLeastOnce), SubackCode::Failure],
        }
    );

    let (pub_ours, pub_theirs) = duplex(4096);
    let b = broker.clone();
    tokio::spawn(async move { b.handle_connection(pub_theirs, None).await });
    let mut publisher = RawPeer::new(pub_ours);
    publisher.send(connect("raw-pub")).await;
    publisher.recv().await;
    publisher
        .send(Packet::Publish(Publish::at_least_once("x/y", b"payload".to_vec(), 9)))
        .await;
    assert_eq!(publisher.recv().await, Packet::PubAck(9));

    let Packet::Publish(first) = peer.recv().await else { panic!("expected publish") };
    assert!(!first.dup);
    // no PUBACK: the broker must resend with dup set and the same id
    let Packet::Publish(second) = peer.recv().await else { panic!("expected publish") };
    assert!(second.dup);
    assert_eq!(second.packet_id, first.packet_id);
    assert_eq!(second.payload, first.payload);
    peer.send(Packet::PubAck(first.packet_id.unwrap())).await;

    tokio::time::sleep(Duration::from_millis(300)).await;
    assert_eq!(broker.metrics().retransmissions.load(Ordering::Relaxed), 1);
    broker.shutdown();
}

#[tokio::test]
async fn client_resends_once_when_first_puback_is_lost() {
    let (ours, theirs) = duplex(4096);
    let fake_broker = tokio::spawn(async move {
        let mut peer = RawPeer::new(ours);
        assert!(matches!(peer.recv().await, Packet::Connect(_)));
        peer.send(Packet::ConnAck {
            session_present: false,
            code: ConnectReturnCode::Accepted,
        })
        .await;
        let Packet::Publish(first) = peer.recv().await else { panic!() };
        assert!(!first.dup);
        // swallow the PUBACK
        let Packet::Publish(second) = peer.recv().await else { panic!() };
        assert!(second.dup);
        assert_eq!(second.packet_id, first.packet_id);
        peer.send(Packet::PubAck(second.packet_id.unwrap())).await;
        // nothing else should arrive before the client disconnects
        let next = peer.recv().await;
        (first, second, next)
    });

    let mut options = ClientOptions::new("dev");
    options.keep_alive = Duration::ZERO;
    options.retry_interval = Duration::from_millis(100);
    let (c, _) = Client::connect(theirs, options).await.unwrap();
    c.publish("ewaste/dev/detections", b"{}".to_vec(), QoS::AtLeastOnce).await.unwrap();
    c.disconnect().await;
    let (_, _, next) = fake_broker.await.unwrap();
    assert_eq!(next, Packet::Disconnect);
}

#[tokio::test]
async fn client_fault_injection_triggers_broker_redelivery() {
    let (broker, addr) = tcp_broker(BrokerConfig {
        retry_interval: Duration::from_millis(100),
        ..BrokerConfig::default()
    })
    .await;
    let mut options = ClientOptions::new("lossy");
    options.faults = FaultInjection { drop_outgoing_pubacks: 1 };
    let (sub, mut incoming) = Client::connect_tcp(&addr, options).await.unwrap();
    sub.subscribe(&[("t", QoS::AtLeastOnce)]).await.unwrap();
    let (p, _) = client(&addr, "p").await;
    p.publish("t", b"once".to_vec(), QoS::AtLeastOnce).await.unwrap();

    let a = timeout(WAIT, incoming.recv()).await.unwrap().unwrap();
    let b = timeout(WAIT, incoming.recv()).await.unwrap().unwrap();
    assert!(!a.dup && b.dup);
    assert_eq!(a.payload, b.payload);
    tokio::time::sleep(Duration::from_millis(300)).await;
    assert!(incoming.try_recv().is_none());
    assert_eq!(broker.metrics().retransmissions.load(Ordering::Relaxed), 1);
    broker.shutdown();
}

#[tokio::test]
async fn refused_and_missing_connack() {
    let (ours, theirs) = duplex(1024);
    tokio::spawn(async move {
        let mut peer = RawPeer::new(ours);
        peer.recv().await;
        peer.send(Packet::ConnAck {
            session_present: false,
            code: ConnectReturnCode::NotAuthorized,
        })
        .await;
        peer
    });
    assert!(matches!(
        Client::connect(theirs, ClientOptions::new("x")).await,
        Err(ClientError::ConnectionRefused(ConnectReturnCode::NotAuthorized))
    ));

    let (ours, theirs) = duplex(1024);
    let mut options = ClientOptions::new("x");
    options.connect_timeout = Duration::from_millis(100);
    let result = Client::connect(theirs, options).await;
    drop(ours);
    assert!(matches!(result, Err(ClientError::Timeout)));
}

#[tokio::test]
async fn keep_alive_pings_are_answered() {
    let (broker, addr) = tcp_broker(BrokerConfig::default()).await;
    let mut options = ClientOptions::new("pinger");
    options.keep_alive = Duration::from_secs(1);
    let (c, _) = Client::connect_tcp(&addr, options).await.unwrap();
    tokio::time::sleep(Duration::from_millis(2500)).await;
    // still connected after more than one keep-alive period of silence
    c.publish("t", b"x".to_vec(), QoS::AtLeastOnce).await.unwrap();
    assert_eq!(broker.connected_clients(), vec!["pinger".to_string()]);
    broker.shutdown();
}
