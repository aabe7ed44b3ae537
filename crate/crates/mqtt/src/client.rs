//! Async MQTT client. A background task owns the connection; [`Client`] is a
//! cloneable handle that sends it commands.

use std::collections::HashMap;
use std::time::Duration;

use thiserror::Error;
use tokio::io::{AsyncRead, AsyncWrite};
use tokio::net::TcpStream;
use tokio::sync::{mpsc, oneshot};
use tokio::time::{sleep_until, timeout, Instant};
use tracing::debug;

use crate::broker::DEFAULT_RETRY_INTERVAL;
use crate::framed::{write_packet, FrameError, PacketReader, DEFAULT_MAX_PACKET};
use crate::packet::{Connect, ConnectReturnCode, Packet, Publish, QoS, SubackCode};
use crate::topic::{validate_topic_name, TopicError, TopicFilter};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("broker refused the connection: {0:?}")]
    ConnectionRefused(ConnectReturnCode),
    #[error("timed out waiting for the broker")]
    Timeout,
    #[error("connection closed")]
    ConnectionClosed,
    #[error("unexpected packet from broker: {0}")]
    Unexpected(String),
    #[error(transparent)]
    Topic(#[from] TopicError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Test hooks for simulating a lossy link.
#[derive(Debug, Clone, Default)]
pub struct FaultInjection {
    /// Number of PUBACKs (for received QoS-1 messages) to silently not send.
    pub drop_outgoing_pubacks: u32,
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub client_id: String,
    /// Zero disables keep-alive.
    pub keep_alive: Duration,
    pub retry_interval: Duration,
    /// `None` retries QoS-1 publishes until acknowledged.
    pub max_retransmits: Option<u32>,
    pub connect_timeout: Duration,
    pub faults: FaultInjection,
}

impl ClientOptions {
    pub fn new(client_id: impl Into<String>) -> Self {
        Self {
            client_id: client_id.into(),
            keep_alive: Duration::from_secs(30),
            retry_interval: DEFAULT_RETRY_INTERVAL,
            max_retransmits: None,
            connect_timeout: Duration::from_secs(10),
            faults: FaultInjection::default(),
        }
    }
}

/// An application message received from a subscription.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub topic: String,
    pub payload: Vec<u8>,
    pub qos: QoS,
    pub dup: bool,
}

enum Command {
    Publish {
        topic: String,
        payload: Vec<u8>,
        qos: QoS,
        done: oneshot::Sender<Result<(), ClientError>>,
    },
    Subscribe {
        filters: Vec<(String, QoS)>,
        done: oneshot::Sender<Result<Vec<SubackCode>, ClientError>>,
    },
    Disconnect {
        done: oneshot::Sender<()>,
    },
}

#[derive(Clone)]
pub struct Client {
    commands: mpsc::Sender<Command>,
}

/// Messages delivered to this client, in arrival order. Ends when the
/// connection closes.
pub struct Incoming {
    rx: mpsc::UnboundedReceiver<Message>,
}

impl Incoming {
    pub async fn recv(&mut self) -> Option<Message> {
        self.rx.recv().await
    }

    pub fn try_recv(&mut self) -> Option<Message> {
        self.rx.try_recv().ok()
    }
}

impl Client {
    pub async fn connect_tcp(addr: &str, options: ClientOptions) -> Result<(Client, Incoming), ClientError> {
        let stream = timeout(options.connect_timeout, TcpStream::connect(addr))
            .await
            .map_err(|_| ClientError::Timeout)??;
        let _ = stream.set_nodelay(true);
        Self::connect(stream, options).await
    }

    /// Sends CONNECT over `stream` and waits for CONNACK.
    pub async fn connect<S>(stream: S, options: ClientOptions) -> Result<(Client, Incoming), ClientError>
    where
        S: AsyncRead + AsyncWrite + Send + Unpin + 'static,
    {
        let (rd, mut wr) = tokio::io::split(stream);
        let mut reader = PacketReader::new(rd, DEFAULT_MAX_PACKET);
        let keep_alive_s = u16::try_from(options.keep_alive.as_secs()).unwrap_or(u16::MAX);
        write_packet(
            &mut wr,
            &Packet::Connect(Connect {
                client_id: options.client_id.clone(),
                keep_alive_s,
                clean_session: true,
            }),
        )
        .await?;

        match timeout(options.connect_timeout, reader.next()).await {
            Err(_) => return Err(ClientError::Timeout),
            Ok(Ok(None)) => return Err(ClientError::ConnectionClosed),
            Ok(Err(e)) => return Err(e.into()),
            Ok(Ok(Some(Packet::ConnAck { code: ConnectReturnCode::Accepted, .. }))) => {}
            Ok(Ok(Some(Packet::ConnAck { code, .. }))) => return Err(ClientError::ConnectionRefused(code)),
            Ok(Ok(Some(other))) => return Err(ClientError::Unexpected(format!("{other:?}"))),
        }

        let (cmd_tx, cmd_rx) = mpsc::channel(64);
        let (msg_tx, msg_rx) = mpsc::unbounded_channel();
        let task = Connection {
            options,
            keep_alive: (keep_alive_s > 0).then(|| Duration::from_secs(keep_alive_s.into())),
            pending_publishes: HashMap::new(),
            pending_subscribes: HashMap::new(),
            next_id: 1,
            last_sent: Instant::now(),
            ping_sent: None,
            messages: msg_tx,
        };
        tokio::spawn(task.run(reader, wr, cmd_rx));
        Ok((Client { commands: cmd_tx }, Incoming { rx: msg_rx }))
    }

    /// Publishes and, for QoS 1, waits until the broker acknowledges.
    pub async fn publish(&self, topic: &str, payload: impl Into<Vec<u8>>, qos: QoS) -> Result<(), ClientError> {
        validate_topic_name(topic)?;
        let (done, rx) = oneshot::channel();
        self.commands
            .send(Command::Publish {
                topic: topic.to_string(),
                payload: payload.into(),
                qos,
                done,
            })
            .await
            .map_err(|_| ClientError::ConnectionClosed)?;
        rx.await.map_err(|_| ClientError::ConnectionClosed)?
    }

    pub async fn subscribe(&self, filters: &[(&str, QoS)]) -> Result<Vec<SubackCode>, ClientError> {
        for (f, _) in filters {
            TopicFilter::parse(f)?;
        }
        let (done, rx) = oneshot::channel();
        self.commands
            .send(Command::Subscribe {
                filters: filters.iter().map(|(f, q)| (f.to_string(), *q)).collect(),
                done,
            })
            .await
            .map_err(|_| ClientError::ConnectionClosed)?;
        rx.await.map_err(|_| ClientError::ConnectionClosed)?
    }

    /// Sends DISCONNECT and closes the connection.
    pub async fn disconnect(&self) {
        let (done, rx) = oneshot::channel();
        if self.commands.send(Command::Disconnect { done }).await.is_ok() {
            let _ = rx.await;
        }
    }
}

struct PendingPublish {
    publish: Publish,
    resend_at: Instant,
    retransmits: u32,
    done: oneshot::Sender<Result<(), ClientError>>,
}

struct Connection {
    options: ClientOptions,
    keep_alive: Option<Duration>,
    pending_publishes: HashMap<u16, PendingPublish>,
    pending_subscribes: HashMap<u16, oneshot::Sender<Result<Vec<SubackCode>, ClientError>>>,
    next_id: u16,
    last_sent: Instant,
    ping_sent: Option<Instant>,
    messages: mpsc::UnboundedSender<Message>,
}

impl Connection {
    fn allocate_id(&mut self) -> u16 {
        loop {
            let id = self.next_id;
            self.next_id = self.next_id.checked_add(1).unwrap_or(1);
            if !self.pending_publishes.contains_key(&id) && !self.pending_subscribes.contains_key(&id) {
                return id;
            }
        }
    }

    async fn send<W: AsyncWrite + Unpin>(&mut self, wr: &mut W, packet: &Packet) -> Result<(), ClientError> {
        write_packet(wr, packet).await?;
        self.last_sent = Instant::now();
        Ok(())
    }

    fn next_wake(&self) -> Option<Instant> {
        let retry = self.pending_publishes.values().map(|p| p.resend_at).min();
        let keep_alive = self.keep_alive.map(|k| match self.ping_sent {
            Some(sent) => sent + k,
            None => self.last_sent + k,
        });
        [retry, keep_alive].into_iter().flatten().min()
    }

    async fn run<R, W>(mut self, mut reader: PacketReader<R>, mut wr: W, mut commands: mpsc::Receiver<Command>)
    where
        R: AsyncRead + Unpin,
        W: AsyncWrite + Unpin,
    {
        let outcome: Result<(), ClientError> = async {
            loop {
                let wake = self.next_wake();
                tokio::select! {
                    packet = reader.next() => {
                        match packet? {
                            Some(p) => self.on_packet(p, &mut wr).await?,
                            None => return Err(ClientError::ConnectionClosed),
                        }
                    }
                    cmd = commands.recv() => {
                        let Some(cmd) = cmd else {
                            // every handle dropped
                            let _ = self.send(&mut wr, &Packet::Disconnect).await;
                            return Ok(());
                        };
                        if let Some(done) = self.on_command(cmd, &mut wr).await? {
                            let _ = done.send(());
                            return Ok(());
                        }
                    }
                    _ = sleep_until(wake.unwrap_or_else(Instant::now)), if wake.is_some() => {
                        self.on_timer(&mut wr).await?;
                    }
                }
            }
        }
        .await;

        if let Err(e) = &outcome {
            debug!(client_id = %self.options.client_id, error = %e, "client connection ended");
        }
        for (_, p) in self.pending_publishes.drain() {
            let _ = p.done.send(Err(ClientError::ConnectionClosed));
        }
        for (_, s) in self.pending_subscribes.drain() {
            let _ = s.send(Err(ClientError::ConnectionClosed));
        }
    }

    async fn on_packet<W: AsyncWrite + Unpin>(&mut self, packet: Packet, wr: &mut W) -> Result<(), ClientError> {
        match packet {
            Packet::Publish(p) => {
                if let Some(id) = p.packet_id {
                    if self.options.faults.drop_outgoing_pubacks > 0 {
                        self.options.faults.drop_outgoing_pubacks -= 1;
                        debug!(packet_id = id, "fault injection: dropping PUBACK");
                    } else {
                        self.send(wr, &Packet::PubAck(id)).await?;
                    }
                }
                let _ = self.messages.send(Message {
                    topic: p.topic,
                    payload: p.payload,
                    qos: p.qos,
                    dup: p.dup,
                });
            }
            Packet::PubAck(id) => {
                if let Some(p) = self.pending_publishes.remove(&id) {
                    let _ = p.done.send(Ok(()));
                }
            }
            Packet::SubAck { packet_id, codes } => {
                if let Some(done) = self.pending_subscribes.remove(&packet_id) {
                    let _ = done.send(Ok(codes));
                }
            }
            Packet::PingResp => self.ping_sent = None,
            other => return Err(ClientError::Unexpected(format!("{other:?}"))),
        }
        Ok(())
    }

    /// Returns the disconnect acknowledgement when the loop should stop.
    async fn on_command<W: AsyncWrite + Unpin>(
        &mut self,
        cmd: Command,
        wr: &mut W,
    ) -> Result<Option<oneshot::Sender<()>>, ClientError> {
        match cmd {
            Command::Publish {
                topic,
                payload,
                qos,
                done,
            } => match qos {
                QoS::AtMostOnce => {
                    let r = self.send(wr, &Packet::Publish(Publish::at_most_once(topic, payload))).await;
                    let failed = r.is_err();
                    let _ = done.send(r);
                    if failed {
                        return Err(ClientError::ConnectionClosed);
                    }
                }
                QoS::AtLeastOnce => {
                    let id = self.allocate_id();
                    let publish = Publish::at_least_once(topic, payload, id);
                    self.send(wr, &Packet::Publish(publish.clone())).await?;
                    self.pending_publishes.insert(
                        id,
                        PendingPublish {
                            publish,
                            resend_at: Instant::now() + self.options.retry_interval,
                            retransmits: 0,
                            done,
                        },
                    );
                }
            },
            Command::Subscribe { filters, done } => {
                let packet_id = self.allocate_id();
                self.send(wr, &Packet::Subscribe { packet_id, filters }).await?;
                self.pending_subscribes.insert(packet_id, done);
            }
            Command::Disconnect { done } => {
                let _ = self.send(wr, &Packet::Disconnect).await;
                return Ok(Some(done));
            }
        }
        Ok(None)
    }

    async fn on_timer<W: AsyncWrite + Unpin>(&mut self, wr: &mut W) -> Result<(), ClientError> {
        let now = Instant::now();

        let due: Vec<u16> = self
            .pending_publishes
            .iter()
            .filter(|(_, p)| p.resend_at <= now)
            .map(|(id, _)| *id)
            .collect();
        for id in due {
            let exhausted = self
                .options
                .max_retransmits
                .is_some_and(|max| self.pending_publishes[&id].retransmits >= max);
            if exhausted {
                let p = self.pending_publishes.remove(&id).expect("id is pending");
                let _ = p.done.send(Err(ClientError::Timeout));
                continue;
            }
            let pending = self.pending_publishes.get_mut(&id).expect("id is pending");
            pending.publish.dup = true;
            pending.retransmits += 1;
            pending.resend_at = now + self.options.retry_interval;
            let packet = Packet::Publish(pending.publish.clone());
            debug!(packet_id = id, "retransmitting publish");
            self.send(wr, &packet).await?;
        }

        if let Some(k) = self.keep_alive {
            match self.ping_sent {
                Some(sent) if now >= sent + k => return Err(ClientError::Timeout),
                None if now >= self.last_sent + k => {
                    self.send(wr, &Packet::PingReq).await?;
                    self.ping_sent = Some(Instant::now());
                }
                _ => {}
            }
        }
        Ok(())
    }
}
