//! Two-party pub/sub sessions over a byte stream.
//!
//! A session starts with one handshake frame from each side on topic
//! `__handshake`, then carries data envelopes. In lock-step mode every
//! [`Session::step_exchange`] ends with a `__step` marker and blocks until the
//! peer's marker for the same step arrives, so everything the peer sent
//! before its marker is returned by the matching exchange.
//!
//! I/O is split between a background reader thread, which decodes frames
//! into a channel, and the calling thread, which writes.

use std::collections::{HashMap, HashSet, VecDeque};
use std::io::{self, BufWriter, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::wire::{encode_frame, FrameDecoder, MessageEnvelope, WireError};

pub const PROTOCOL_VERSION: u32 = 1;
pub const HANDSHAKE_TOPIC: &str = "__handshake";
pub const STEP_TOPIC: &str = "__step";
const HANDSHAKE_MSG_TYPE: &str = "Handshake";
const STEP_MSG_TYPE: &str = "StepMarker";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BridgeError {
    #[error("protocol version mismatch: local {local}, peer {peer}")]
    VersionMismatch { local: u32, peer: u32 },
    #[error("no handshake within {0:?}")]
    HandshakeTimeout(Duration),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("peer closed the session")]
    PeerClosed,
    #[error("topic `{0}` is not declared in this endpoint's publications")]
    UndeclaredTopic(String),
    #[error("sim_time on `{topic}` went backwards ({last} -> {got})")]
    TimeRegression { topic: String, last: f64, got: f64 },
    #[error("peer step marker {step} missing after {waited:?}{}", if *peer_closed { " (peer closed)" } else { "" })]
    StepTimeout {
        step: u64,
        waited: Duration,
        peer_closed: bool,
    },
    #[error("peer step marker (k={got}, t={got_time}) does not match local step (k={expected}, t={expected_time})")]
    StepIndexMismatch {
        expected: u64,
        got: u64,
        expected_time: f64,
        got_time: f64,
    },
    #[error("step {step} must be taken at sim_time {expected}, got {got}")]
    StepTime { step: u64, expected: f64, got: f64 },
    #[error("step_exchange requires a lock_step sync policy")]
    NotLockStep,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("invalid endpoint config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Wire(#[from] WireError),
}

impl From<io::Error> for BridgeError {
    fn from(e: io::Error) -> Self {
        BridgeError::Transport(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncMode {
    LockStep,
    FreeRunning,
}

/// How the two endpoints share simulated time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyncPolicy {
    pub mode: SyncMode,
    /// Seconds of sim time per exchange; lock-step only.
    #[serde(default)]
    pub step_dt_s: f64,
}

impl SyncPolicy {
    pub fn lock_step(step_dt_s: f64) -> Self {
        Self {
            mode: SyncMode::LockStep,
            step_dt_s,
        }
    }

    pub fn free_running() -> Self {
        Self {
            mode: SyncMode::FreeRunning,
            step_dt_s: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Listener,
    Connector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EndpointConfig {
    pub role: Role,
    pub host: String,
    pub port: u16,
    pub node_name: String,
    pub handshake_timeout: Duration,
    pub step_timeout: Duration,
}

impl EndpointConfig {
    pub fn new(role: Role, host: impl Into<String>, port: u16, node_name: impl Into<String>) -> Self {
        Self {
            role,
            host: host.into(),
            port,
            node_name: node_name.into(),
            handshake_timeout: Duration::from_secs(10),
            step_timeout: Duration::from_secs(5),
        }
    }

    pub fn validate(&self) -> Result<(), BridgeError> {
        if self.port == 0 {
            return Err(BridgeError::InvalidConfig("port must be in [1, 65535]".into()));
        }
        if self.handshake_timeout.is_zero() || self.step_timeout.is_zero() {
            return Err(BridgeError::InvalidConfig("timeouts must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicDecl {
    pub topic: String,
    pub msg_type: String,
}

impl TopicDecl {
    pub fn new(topic: impl Into<String>, msg_type: impl Into<String>) -> Self {
        Self {
            topic: topic.into(),
            msg_type: msg_type.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Handshake {
    pub protocol_version: u32,
    pub node_name: String,
    pub publications: Vec<TopicDecl>,
    pub subscriptions: Vec<TopicDecl>,
}

impl Handshake {
    pub fn new(node_name: impl Into<String>) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            node_name: node_name.into(),
            publications: Vec::new(),
            subscriptions: Vec::new(),
        }
    }

    pub fn publishes(mut self, topic: &str, msg_type: &str) -> Self {
        self.publications.push(TopicDecl::new(topic, msg_type));
        self
    }

    pub fn subscribes(mut self, topic: &str, msg_type: &str) -> Self {
        self.subscriptions.push(TopicDecl::new(topic, msg_type));
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SessionStats {
    pub sent: u64,
    pub received: u64,
    pub dropped_unsubscribed: u64,
    pub steps: u64,
}

impl SessionStats {
    pub fn summary_line(&self, node_name: &str) -> String {
        crate::wire::canonical_json(&json!({
            "node": node_name,
            "sent": self.sent,
            "received": self.received,
            "dropped_unsubscribed": self.dropped_unsubscribed,
            "steps": self.steps,
        }))
    }
}

/// A byte stream that can be split into independent read and write halves.
pub trait Transport: Send + 'static {
    type Reader: Read + Send + 'static;
    type Writer: Write + Send + 'static;

    fn into_split(self) -> io::Result<(Self::Reader, Self::Writer)>;
}

/// Write half of a TCP stream; shuts the socket down when dropped so the
/// peer and the local reader thread both see end-of-stream.
pub struct TcpWriter(TcpStream);

impl Write for TcpWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.write(buf)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.0.flush()
    }
}

impl Drop for TcpWriter {
    fn drop(&mut self) {
        let _ = self.0.flush();
        let _ = self.0.shutdown(Shutdown::Both);
    }
}

impl Transport for TcpStream {
    type Reader = TcpStream;
    type Writer = TcpWriter;

    fn into_split(self) -> io::Result<(TcpStream, TcpWriter)> {
        self.set_nodelay(true)?;
        let reader = self.try_clone()?;
        Ok((reader, TcpWriter(self)))
    }
}

/// One end of an in-process duplex byte pipe.
pub struct MemoryStream {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
}

/// Two connected in-memory endpoints.
pub fn memory_pair() -> (MemoryStream, MemoryStream) {
    let (a_tx, b_rx) = mpsc::channel();
    let (b_tx, a_rx) = mpsc::channel();
    (
        MemoryStream { tx: a_tx, rx: a_rx },
        MemoryStream { tx: b_tx, rx: b_rx },
    )
}

pub struct MemoryReader {
    rx: Receiver<Vec<u8>>,
    chunk: Vec<u8>,
    pos: usize,
}

impl Read for MemoryReader {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        while self.pos == self.chunk.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.chunk = chunk;
                    self.pos = 0;
                }
                Err(_) => return Ok(0),
            }
        }
        let n = buf.len().min(self.chunk.len() - self.pos);
        buf[..n].copy_from_slice(&self.chunk[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

pub struct MemoryWriter {
    tx: Sender<Vec<u8>>,
}

impl Write for MemoryWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.tx
            .send(buf.to_vec())
            .map_err(|_| io::Error::new(io::ErrorKind::BrokenPipe, "memory peer dropped"))?;
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

impl Transport for MemoryStream {
    type Reader = MemoryReader;
    type Writer = MemoryWriter;

    fn into_split(self) -> io::Result<(MemoryReader, MemoryWriter)> {
        Ok((
            MemoryReader {
                rx: self.rx,
                chunk: Vec::new(),
                pos: 0,
            },
            MemoryWriter { tx: self.tx },
        ))
    }
}

enum Event {
    Envelope(MessageEnvelope),
    Closed,
    Failed(String),
}

fn spawn_reader<R: Read + Send + 'static>(mut reader: R, events: Sender<Event>) {
    thread::spawn(move || {
        let mut decoder = FrameDecoder::new();
        let mut buf = vec![0u8; 64 * 1024];
        loop {
            let n = match reader.read(&mut buf) {
                Ok(0) => {
                    let _ = events.send(Event::Closed);
                    return;
                }
                Ok(n) => n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(e) => {
                    let _ = events.send(Event::Failed(e.to_string()));
                    return;
                }
            };
            decoder.push(&buf[..n]);
            loop {
                match decoder.next_envelope() {
                    Ok(Some(env)) => {
                        if events.send(Event::Envelope(env)).is_err() {
                            return;
                        }
                    }
                    Ok(None) => break,
                    Err(e) => {
                        let _ = events.send(Event::Failed(e.to_string()));
                        return;
                    }
                }
            }
        }
    });
}

/// A listening socket waiting for its single peer.
pub struct PendingListener {
    listener: TcpListener,
}

impl PendingListener {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self, BridgeError> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
        })
    }

    pub fn local_addr(&self) -> Result<std::net::SocketAddr, BridgeError> {
        Ok(self.listener.local_addr()?)
    }

    /// Accepts one connection and performs the handshake, all within
    /// `handshake_timeout`.
    pub fn accept(
        self,
        local: Handshake,
        handshake_timeout: Duration,
        step_timeout: Duration,
    ) -> Result<Session, BridgeError> {
        let deadline = Instant::now() + handshake_timeout;
        self.listener.set_nonblocking(true)?;
        let stream = loop {
            match self.listener.accept() {
                Ok((stream, _)) => break stream,
                Err(e) if e.kind() == io::ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        return Err(BridgeError::HandshakeTimeout(handshake_timeout));
                    }
                    thread::sleep(Duration::from_millis(2));
                }
                Err(e) => return Err(e.into()),
            }
        };
        stream.set_nonblocking(false)?;
        let remaining = deadline.saturating_duration_since(Instant::now());
        Session::establish_over(stream, local, remaining.max(Duration::from_millis(1)), step_timeout)
    }
}

/// Connects to `addr`, retrying until the deadline while the listener is not
/// yet up.
pub fn connect(
    addr: &str,
    local: Handshake,
    handshake_timeout: Duration,
    step_timeout: Duration,
) -> Result<Session, BridgeError> {
    let deadline = Instant::now() + handshake_timeout;
    let stream = loop {
        let attempt = addr.to_socket_addrs().and_then(|mut addrs| {
            addrs
                .next()
                .ok_or_else(|| io::Error::new(io::ErrorKind::NotFound, "address did not resolve"))
        });
        let remaining = deadline.saturating_duration_since(Instant::now());
        match attempt.and_then(|a| TcpStream::connect_timeout(&a, remaining.max(Duration::from_millis(1)))) {
            Ok(s) => break s,
            Err(e) => {
                if Instant::now() >= deadline {
                    return match e.kind() {
                        io::ErrorKind::ConnectionRefused | io::ErrorKind::TimedOut => {
                            Err(BridgeError::HandshakeTimeout(handshake_timeout))
                        }
                        _ => Err(e.into()),
                    };
                }
                thread::sleep(Duration::from_millis(20));
            }
        }
    };
    let remaining = deadline.saturating_duration_since(Instant::now());
    Session::establish_over(stream, local, remaining.max(Duration::from_millis(1)), step_timeout)
}

/// Opens a TCP session as described by `config`.
pub fn establish(config: &EndpointConfig, local: Handshake) -> Result<Session, BridgeError> {
    config.validate()?;
    let addr = format!("{}:{}", config.host, config.port);
    match config.role {
        Role::Listener => PendingListener::bind(addr.as_str())?.accept(
            local,
            config.handshake_timeout,
            config.step_timeout,
        ),
        Role::Connector => connect(&addr, local, config.handshake_timeout, config.step_timeout),
    }
}

pub struct Session {
    local: Handshake,
    peer: Handshake,
    writer: BufWriter<Box<dyn Write + Send>>,
    events: Receiver<Event>,
    pending: VecDeque<MessageEnvelope>,
    sync: SyncPolicy,
    step_timeout: Duration,
    publications: HashMap<String, String>,
    subscriptions: HashSet<String>,
    out_seq: HashMap<String, u64>,
    out_time: HashMap<String, f64>,
    in_seq: HashMap<String, u64>,
    next_step: u64,
    stats: SessionStats,
    failure: Option<BridgeError>,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("local", &self.local.node_name)
            .field("peer", &self.peer.node_name)
            .field("next_step", &self.next_step)
            .field("stats", &self.stats)
            .finish()
    }
}

impl Session {
    /// Runs the handshake over an already-connected transport.
    pub fn establish_over<T: Transport>(
        transport: T,
        local: Handshake,
        handshake_timeout: Duration,
        step_timeout: Duration,
    ) -> Result<Session, BridgeError> {
        let (reader, writer) = transport.into_split()?;
        let (tx, rx) = mpsc::channel();
        spawn_reader(reader, tx);
        let mut writer: BufWriter<Box<dyn Write + Send>> = BufWriter::new(Box::new(writer));

        let hello = MessageEnvelope::new(
            HANDSHAKE_TOPIC,
            HANDSHAKE_MSG_TYPE,
            0,
            0.0,
            serde_json::to_value(&local).expect("handshake is plain data"),
        );
        writer.write_all(&encode_frame(&hello)?)?;
        writer.flush()?;

        let peer_env = match rx.recv_timeout(handshake_timeout) {
            Ok(Event::Envelope(env)) => env,
            Ok(Event::Closed) => {
                return Err(BridgeError::Transport("peer closed during handshake".into()))
            }
            Ok(Event::Failed(e)) => return Err(BridgeError::Transport(e)),
            Err(_) => return Err(BridgeError::HandshakeTimeout(handshake_timeout)),
        };
        if peer_env.topic != HANDSHAKE_TOPIC {
            return Err(BridgeError::Protocol(format!(
                "expected handshake, got topic `{}`",
                peer_env.topic
            )));
        }
        let peer: Handshake = serde_json::from_value(peer_env.payload)
            .map_err(|e| BridgeError::Protocol(format!("bad handshake: {e}")))?;
        if peer.protocol_version != local.protocol_version {
            return Err(BridgeError::VersionMismatch {
                local: local.protocol_version,
                peer: peer.protocol_version,
            });
        }

        Ok(Session {
            publications: local
                .publications
                .iter()
                .map(|d| (d.topic.clone(), d.msg_type.clone()))
                .collect(),
            subscriptions: local.subscriptions.iter().map(|d| d.topic.clone()).collect(),
            local,
            peer,
            writer,
            events: rx,
            pending: VecDeque::new(),
            sync: SyncPolicy::free_running(),
            step_timeout,
            out_seq: HashMap::new(),
            out_time: HashMap::new(),
            in_seq: HashMap::new(),
            next_step: 0,
            stats: SessionStats::default(),
            failure: None,
        })
    }

    pub fn with_sync(mut self, sync: SyncPolicy) -> Self {
        self.sync = sync;
        self
    }

    pub fn local(&self) -> &Handshake {
        &self.local
    }

    pub fn peer(&self) -> &Handshake {
        &self.peer
    }

    pub fn stats(&self) -> SessionStats {
        self.stats
    }

    /// Index of the next lock-step exchange.
    pub fn next_step(&self) -> u64 {
        self.next_step
    }

    pub fn publish(&mut self, topic: &str, payload: Value, sim_time: f64) -> Result<(), BridgeError> {
        self.enqueue(topic, payload, sim_time)?;
        self.writer.flush()?;
        Ok(())
    }

    fn enqueue(&mut self, topic: &str, payload: Value, sim_time: f64) -> Result<(), BridgeError> {
        let msg_type = self
            .publications
            .get(topic)
            .ok_or_else(|| BridgeError::UndeclaredTopic(topic.to_owned()))?
            .clone();
        self.write_envelope(topic, &msg_type, payload, sim_time)?;
        self.stats.sent += 1;
        Ok(())
    }

    fn write_envelope(
        &mut self,
        topic: &str,
        msg_type: &str,
        payload: Value,
        sim_time: f64,
    ) -> Result<(), BridgeError> {
        if let Some(&last) = self.out_time.get(topic) {
            if sim_time < last {
                return Err(BridgeError::TimeRegression {
                    topic: topic.to_owned(),
                    last,
                    got: sim_time,
                });
            }
        }
        let seq = self.out_seq.get(topic).copied().unwrap_or(0);
        let env = MessageEnvelope::new(topic, msg_type, seq, sim_time, payload);
        let frame = encode_frame(&env)?;
        self.writer.write_all(&frame)?;
        self.out_seq.insert(topic.to_owned(), seq + 1);
        self.out_time.insert(topic.to_owned(), sim_time);
        Ok(())
    }

    /// Next received envelope, waiting at most until `deadline`. Data
    /// envelopes for unsubscribed topics are dropped and counted.
    fn next_envelope(&mut self, deadline: Instant) -> Result<Option<MessageEnvelope>, BridgeError> {
        if let Some(env) = self.pending.pop_front() {
            return Ok(Some(env));
        }
        if let Some(err) = &self.failure {
            return Err(err.clone());
        }
        loop {
            let wait = deadline.saturating_duration_since(Instant::now());
            let event = match self.events.recv_timeout(wait) {
                Ok(ev) => ev,
                Err(RecvTimeoutError::Timeout) => return Ok(None),
                Err(RecvTimeoutError::Disconnected) => Event::Closed,
            };
            match event {
                Event::Envelope(env) => {
                    if env.topic == STEP_TOPIC {
                        return Ok(Some(env));
                    }
                    self.check_sequence(&env)?;
                    self.stats.received += 1;
                    if self.subscriptions.contains(&env.topic) {
                        return Ok(Some(env));
                    }
                    self.stats.dropped_unsubscribed += 1;
                }
                Event::Closed => return Err(self.fail(BridgeError::PeerClosed)),
                Event::Failed(e) => return Err(self.fail(BridgeError::Transport(e))),
            }
        }
    }

    fn fail(&mut self, err: BridgeError) -> BridgeError {
        self.failure = Some(err.clone());
        err
    }

    fn check_sequence(&mut self, env: &MessageEnvelope) -> Result<(), BridgeError> {
        let expected = self.in_seq.get(&env.topic).copied().unwrap_or(0);
        if env.sequence != expected {
            let err = BridgeError::Protocol(format!(
                "topic `{}` jumped from sequence {expected} to {}",
                env.topic, env.sequence
            ));
            return Err(self.fail(err));
        }
        self.in_seq.insert(env.topic.clone(), expected + 1);
        Ok(())
    }

    /// Returns every subscribed envelope that has arrived, in arrival order,
    /// waiting up to `max_wait` for the first one. Stops before a peer step
    /// marker, which stays queued for [`Session::step_exchange`].
    ///
    /// After the peer closes, already-received envelopes are still
    /// delivered; once they are drained every call returns `PeerClosed`.
    pub fn poll(&mut self, max_wait: Duration) -> Result<Vec<MessageEnvelope>, BridgeError> {
        let mut out = Vec::new();
        let mut deadline = Instant::now() + max_wait;
        loop {
            match self.next_envelope(deadline) {
                Ok(Some(env)) if env.topic == STEP_TOPIC => {
                    self.pending.push_front(env);
                    return Ok(out);
                }
                Ok(Some(env)) => {
                    out.push(env);
                    deadline = Instant::now();
                }
                Ok(None) => return Ok(out),
                Err(e) if out.is_empty() => return Err(e),
                Err(_) => return Ok(out),
            }
        }
    }

    /// Sends `outgoing` and a step marker, then blocks for the peer's marker
    /// and returns everything the peer sent before it.
    pub fn step_exchange(
        &mut self,
        outgoing: &[(String, Value)],
        sim_time: f64,
    ) -> Result<Vec<MessageEnvelope>, BridgeError> {
        if self.sync.mode != SyncMode::LockStep {
            return Err(BridgeError::NotLockStep);
        }
        if let Some(err) = &self.failure {
            if self.pending.is_empty() {
                return Err(err.clone());
            }
        }
        let step = self.next_step;
        let expected = step as f64 * self.sync.step_dt_s;
        if (sim_time - expected).abs() > 1e-9 * expected.max(1.0) {
            return Err(BridgeError::StepTime {
                step,
                expected,
                got: sim_time,
            });
        }
        for (topic, payload) in outgoing {
            self.enqueue(topic, payload.clone(), sim_time)?;
        }
        self.write_envelope(STEP_TOPIC, STEP_MSG_TYPE, json!({ "k": step }), sim_time)?;
        self.writer.flush()?;

        let started = Instant::now();
        let deadline = started + self.step_timeout;
        let mut incoming = Vec::new();
        loop {
            let env = match self.next_envelope(deadline) {
                Ok(Some(env)) => env,
                Ok(None) => {
                    return Err(BridgeError::StepTimeout {
                        step,
                        waited: started.elapsed(),
                        peer_closed: false,
                    })
                }
                Err(BridgeError::PeerClosed) => {
                    return Err(BridgeError::StepTimeout {
                        step,
                        waited: started.elapsed(),
                        peer_closed: true,
                    })
                }
                Err(e) => return Err(e),
            };
            if env.topic != STEP_TOPIC {
                incoming.push(env);
                continue;
            }
            let got = env
                .payload
                .get("k")
                .and_then(Value::as_u64)
                .ok_or_else(|| BridgeError::Protocol("step marker without integer `k`".into()))?;
            if got != step || env.sim_time != sim_time {
                return Err(self.fail(BridgeError::StepIndexMismatch {
                    expected: step,
                    got,
                    expected_time: sim_time,
                    got_time: env.sim_time,
                }));
            }
            self.next_step += 1;
            self.stats.steps += 1;
            return Ok(incoming);
        }
    }

    /// Flushes, logs the statistics summary line and ends the session.
    pub fn close(mut self) -> SessionStats {
        let _ = self.writer.flush();
        ::log::info!("{}", self.stats.summary_line(&self.local.node_name));
        self.stats
    }
}
