//! In-process MQTT broker: clean sessions only, QoS 0/1, no retained
//! messages or wills.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use tokio::io::{AsyncRead, AsyncWrite};
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch, Notify};
use tokio::time::{sleep_until, timeout, Instant};
use tracing::{debug, info, warn};

use crate::framed::{write_packet, FrameError, PacketReader, DEFAULT_MAX_PACKET};
use crate::packet::{ConnectReturnCode, Packet, Publish, QoS, SubackCode};
use crate::router::SubscriptionTable;
use crate::topic::TopicFilter;

pub const DEFAULT_RETRY_INTERVAL: Duration = Duration::from_secs(5);

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    /// How long an unacknowledged QoS-1 delivery waits before it is resent.
    pub retry_interval: Duration,
    /// Time a new connection has to send CONNECT.
    pub connect_timeout: Duration,
    pub max_packet_size: usize,
}

impl Default for BrokerConfig {
    fn default() -> Self {
        Self {
            retry_interval: DEFAULT_RETRY_INTERVAL,
            connect_timeout: Duration::from_secs(10),
            max_packet_size: DEFAULT_MAX_PACKET,
        }
    }
}

/// Counters exposed for tests and logging.
#[derive(Debug, Default)]
pub struct BrokerMetrics {
    pub connections: AtomicU64,
    pub publishes_received: AtomicU64,
    pub deliveries: AtomicU64,
    pub retransmissions: AtomicU64,
    pub takeovers: AtomicU64,
}

struct SessionHandle {
    conn_id: u64,
    outbox: mpsc::UnboundedSender<Outbound>,
    kick: Arc<Notify>,
}

struct Outbound {
    topic: String,
    payload: Vec<u8>,
    qos: QoS,
}

#[derive(Default)]
struct State {
    table: SubscriptionTable,
    sessions: HashMap<String, SessionHandle>,
}

struct Shared {
    config: BrokerConfig,
    state: RwLock<State>,
    next_conn: AtomicU64,
    metrics: BrokerMetrics,
    shutdown: watch::Sender<bool>,
}

/// Cheap to clone; all clones share one routing table.
#[derive(Clone)]
pub struct Broker {
    shared: Arc<Shared>,
}

impl Default for Broker {
    fn default() -> Self {
        Self::new(BrokerConfig::default())
    }
}

impl Broker {
    pub fn new(config: BrokerConfig) -> Self {
        let (shutdown, _) = watch::channel(false);
        Self {
            shared: Arc::new(Shared {
                config,
                state: RwLock::new(State::default()),
                next_conn: AtomicU64::new(1),
                metrics: BrokerMetrics::default(),
                shutdown,
            }),
        }
    }

    pub fn metrics(&self) -> &BrokerMetrics {
        &self.shared.metrics
    }

    pub fn connected_clients(&self) -> Vec<String> {
        let state = self.shared.state.read().expect("broker state poisoned");
        let mut ids: Vec<String> = state.sessions.keys().cloned().collect();
        ids.sort();
        ids
    }

    /// Closes every connection and stops accept loops.
    pub fn shutdown(&self) {
        self.shared.shutdown.send_replace(true);
    }

    /// Accepts TCP connections until [`Broker::shutdown`] is called.
    pub async fn serve(&self, listener: TcpListener) -> std::io::Result<()> {
        let mut stop = self.shared.shutdown.subscribe();
        if *stop.borrow() {
            return Ok(());
        }
        info!(addr = ?listener.local_addr().ok(), "broker listening");
        loop {
            tokio::select! {
                accepted = listener.accept() => {
                    let (stream, peer) = accepted?;
                    let _ = stream.set_nodelay(true);
                    let broker = self.clone();
                    tokio::spawn(async move {
                        broker.handle_connection(stream, Some(peer)).await;
                    });
                }
                _ = stop.changed() => return Ok(()),
            }
        }
    }

    /// Binds `addr` and serves in a background task; returns the bound address.
    pub async fn spawn_tcp(&self, addr: &str) -> std::io::Result<SocketAddr> {
        let listener = TcpListener::bind(addr).await?;
        let local = listener.local_addr()?;
        let broker = self.clone();
        tokio::spawn(async move {
            if let Err(e) = broker.serve(listener).await {
                warn!(error = %e, "broker accept loop failed");
            }
        });
        Ok(local)
    }

    /// Serves one already-established connection (TCP or in-memory) to completion.
    pub async fn handle_connection<S>(&self, stream: S, peer: Option<SocketAddr>)
    where
        S: AsyncRead + AsyncWrite + Send + Unpin,
    {
        let conn_id = self.shared.next_conn.fetch_add(1, Ordering::Relaxed);
        match self.run_connection(stream, conn_id).await {
            Ok(()) => debug!(conn_id, ?peer, "connection closed"),
            Err(e) => debug!(conn_id, ?peer, error = %e, "connection dropped"),
        }
    }

    async fn run_connection<S>(&self, stream: S, conn_id: u64) -> Result<(), FrameError>
    where
        S: AsyncRead + AsyncWrite + Send + Unpin,
    {
        let cfg = &self.shared.config;
        let (rd, mut wr) = tokio::io::split(stream);
        let mut reader = PacketReader::new(rd, cfg.max_packet_size);

        let connect = match timeout(cfg.connect_timeout, reader.next()).await {
            Ok(Ok(Some(Packet::Connect(c)))) => c,
            Ok(Err(e)) => return Err(e),
            _ => return Ok(()),
        };
        let client_id = if connect.client_id.is_empty() {
            format!("auto-{conn_id}")
        } else {
            connect.client_id.clone()
        };

        let (outbox_tx, mut outbox) = mpsc::unbounded_channel();
        let kick = Arc::new(Notify::new());
        {
            let mut state = self.shared.state.write().expect("broker state poisoned");
            if let Some(old) = state.sessions.remove(&client_id) {
                info!(%client_id, "session takeover");
                old.kick.notify_one();
                self.shared.metrics.takeovers.fetch_add(1, Ordering::Relaxed);
            }
            state.table.remove_session(&client_id);
            state.sessions.insert(
                client_id.clone(),
                SessionHandle {
                    conn_id,
                    outbox: outbox_tx,
                    kick: kick.clone(),
                },
            );
        }
        self.shared.metrics.connections.fetch_add(1, Ordering::Relaxed);

        let result = async {
            write_packet(
                &mut wr,
                &Packet::ConnAck {
                    session_present: false,
                    code: ConnectReturnCode::Accepted,
                },
            )
            .await?;
            let mut session = Session {
                broker: self,
                client_id: &client_id,
                inflight: BTreeMap::new(),
                next_id: 1,
            };
            // 1.5x the keep-alive, as the protocol allows
            let idle_limit = (connect.keep_alive_s > 0)
                .then(|| Duration::from_millis(u64::from(connect.keep_alive_s) * 1500));
            let mut last_heard = Instant::now();
            let mut stop = self.shared.shutdown.subscribe();
            if *stop.borrow() {
                return Ok(());
            }

            loop {
                let retry_at = session.next_retry();
                let idle_at = idle_limit.map(|d| last_heard + d);
                let wake = [retry_at, idle_at].into_iter().flatten().min();

                tokio::select! {
                    packet = reader.next() => {
                        let Some(packet) = packet? else { return Ok(()) };
                        last_heard = Instant::now();
                        if !session.handle_incoming(packet, &mut wr).await? {
                            return Ok(());
                        }
                    }
                    Some(out) = outbox.recv() => {
                        session.deliver(out, &mut wr).await?;
                    }
                    _ = sleep_until(wake.unwrap_or_else(far_future)), if wake.is_some() => {
                        if idle_at.is_some_and(|t| Instant::now() >= t) {
                            debug!(client_id = %session.client_id, "keep-alive expired");
                            return Ok(());
                        }
                        session.retransmit_due(&mut wr).await?;
                    }
                    _ = kick.notified() => return Ok(()),
                    _ = stop.changed() => return Ok(()),
                }
            }
        }
        .await;

        let mut state = self.shared.state.write().expect("broker state poisoned");
        if state.sessions.get(&client_id).is_some_and(|s| s.conn_id == conn_id) {
            state.sessions.remove(&client_id);
            state.table.remove_session(&client_id);
        }
        result
    }

    /// Routes a publish to every matching session. Returns the delivery count.
    fn route(&self, publish: &Publish) -> usize {
        let state = self.shared.state.read().expect("broker state poisoned");
        let deliveries = state.table.route(publish);
        let mut sent = 0;
        for d in deliveries {
            if let Some(session) = state.sessions.get(&d.client_id) {
                let out = Outbound {
                    topic: publish.topic.clone(),
                    payload: publish.payload.clone(),
                    qos: d.qos,
                };
                if session.outbox.send(out).is_ok() {
                    sent += 1;
                }
            }
        }
        self.shared.metrics.deliveries.fetch_add(sent as u64, Ordering::Relaxed);
        sent
    }
}

fn far_future() -> Instant {
    Instant::now() + Duration::from_secs(86_400)
}

struct Inflight {
    publish: Publish,
    resend_at: Instant,
}

struct Session<'a> {
    broker: &'a Broker,
    client_id: &'a str,
    inflight: BTreeMap<u16, Inflight>,
    next_id: u16,
}

impl Session<'_> {
    fn next_retry(&self) -> Option<Instant> {
        self.inflight.values().map(|f| f.resend_at).min()
    }

    fn allocate_id(&mut self) -> u16 {
        loop {
            let id = self.next_id;
            self.next_id = self.next_id.checked_add(1).unwrap_or(1);
            if !self.inflight.contains_key(&id) {
                return id;
            }
        }
    }

    /// Returns `false` when the connection should close.
    async fn handle_incoming<W>(&mut self, packet: Packet, wr: &mut W) -> Result<bool, FrameError>
    where
        W: AsyncWrite + Unpin,
    {
        match packet {
            Packet::Publish(p) => {
                self.broker
                    .shared
                    .metrics
                    .publishes_received
                    .fetch_add(1, Ordering::Relaxed);
                self.broker.route(&p);
                if let Some(id) = p.packet_id {
                    write_packet(wr, &Packet::PubAck(id)).await?;
                }
            }
            Packet::PubAck(id) => {
                self.inflight.remove(&id);
            }
            Packet::Subscribe { packet_id, filters } => {
                let codes = {
                    let mut state = self.broker.shared.state.write().expect("broker state poisoned");
                    filters
                        .iter()
                        .map(|(raw, qos)| match TopicFilter::parse(raw) {
                            Ok(filter) => {
                                SubackCode::Granted(state.table.subscribe(self.client_id, filter, *qos))
                            }
                            Err(_) => SubackCode::Failure,
                        })
                        .collect()
                };
                write_packet(wr, &Packet::SubAck { packet_id, codes }).await?;
            }
            Packet::PingReq => write_packet(wr, &Packet::PingResp).await?,
            Packet::Disconnect => return Ok(false),
            other => {
                warn!(client_id = %self.client_id, packet = ?other, "unexpected packet from client");
                return Ok(false);
            }
        }
        Ok(true)
    }

    async fn deliver<W>(&mut self, out: Outbound, wr: &mut W) -> Result<(), FrameError>
    where
        W: AsyncWrite + Unpin,
    {
        let publish = match out.qos {
            QoS::AtMostOnce => Publish::at_most_once(out.topic, out.payload),
            QoS::AtLeastOnce => {
                let id = self.allocate_id();
                let p = Publish::at_least_once(out.topic, out.payload, id);
                self.inflight.insert(
                    id,
                    Inflight {
                        publish: p.clone(),
                        resend_at: Instant::now() + self.broker.shared.config.retry_interval,
                    },
                );
                p
            }
        };
        write_packet(wr, &Packet::Publish(publish)).await
    }

    async fn retransmit_due<W>(&mut self, wr: &mut W) -> Result<(), FrameError>
    where
        W: AsyncWrite + Unpin,
    {
        let now = Instant::now();
        let interval = self.broker.shared.config.retry_interval;
        for (id, flight) in self.inflight.iter_mut() {
            if flight.resend_at > now {
                continue;
            }
            flight.publish.dup = true;
            flight.resend_at = now + interval;
            debug!(client_id = %self.client_id, packet_id = id, "retransmitting");
            self.broker
                .shared
                .metrics
                .retransmissions
                .fetch_add(1, Ordering::Relaxed);
            write_packet(wr, &Packet::Publish(flight.publish.clone())).await?;
        }
        Ok(())
    }
}
