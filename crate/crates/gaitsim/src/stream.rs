//! Delivery of generated frames to the platform.
//!
//! Loss is injected per transmission unit: an HTTP batch, or a window of packets between
//! two syncs on the binary stream. A lost HTTP batch is dropped either before it reaches
//! the server or after the server stored it, with equal odds; the client cannot tell
//! the two apart and resends until it sees a reply. The server's (foot, seq)
//! deduplication absorbs the resends.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::time::{Duration, Instant};

use insole_core::ingest::serialize;
use insole_core::ingest::wire::{read_framed, write_framed};
use insole_core::model::SensorFrame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use uuid::Uuid;

use crate::client::{ApiClient, ClientError};

#[derive(Debug, Clone)]
pub struct StreamConfig {
    /// Frames per HTTP batch.
    pub batch_frames: usize,
    /// Packets between syncs on the binary stream.
    pub sync_every: usize,
    /// Probability that a transmission unit is lost.
    pub loss: f64,
    /// Upper bound of the random delay before each transmission.
    pub jitter_ms: u64,
    /// Send each unit no earlier than its last frame's timestamp allows.
    pub realtime: bool,
    /// Keep unsent data and retry while the server is unreachable.
    pub buffer: bool,
    /// How long buffer mode waits for the server before giving up.
    pub buffer_timeout: Duration,
    pub retry_interval: Duration,
    /// Transmissions per unit before giving up.
    pub max_attempts: u32,
    pub seed: u64,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            batch_frames: 500,
            sync_every: 500,
            loss: 0.0,
            jitter_ms: 0,
            realtime: false,
            buffer: false,
            buffer_timeout: Duration::from_secs(30),
            retry_interval: Duration::from_millis(100),
            max_attempts: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransmissionReport {
    /// Distinct frames handed to the transport.
    pub sent: u64,
    /// Frames the server confirmed receiving.
    pub acked: u64,
    /// Server counts from the replies the client saw.
    pub accepted: u64,
    pub duplicates: u64,
    pub transmissions: u64,
    pub lost_requests: u64,
    pub lost_responses: u64,
    pub reconnects: u64,
    pub elapsed_s: f64,
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("connection refused: {0}")]
    ConnectionRefused(String),
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("server rejected the data ({status}): {body}")]
    Rejected { status: u16, body: String },
    #[error("gave up after {0} attempts")]
    TooManyAttempts(u32),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("io: {0}")]
    Io(#[from] io::Error),
}

/// Writes the frames as concatenated 68-byte packets.
pub fn emit_file(path: &Path, frames: &[SensorFrame]) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for f in frames {
        w.write_all(&serialize(f))?;
    }
    w.flush()
}

struct Pacer {
    start: Instant,
    t0: u64,
    realtime: bool,
    jitter_ms: u64,
}

impl Pacer {
    fn new(cfg: &StreamConfig, frames: &[SensorFrame]) -> Self {
        Pacer {
            start: Instant::now(),
            t0: frames.iter().map(|f| f.t_ms).min().unwrap_or(0),
            realtime: cfg.realtime,
            jitter_ms: cfg.jitter_ms,
        }
    }

    fn until(&self, t_ms: u64) {
        if self.realtime {
            let due = self.start + Duration::from_millis(t_ms.saturating_sub(self.t0));
            if let Some(wait) = due.checked_duration_since(Instant::now()) {
                std::thread::sleep(wait);
            }
        }
    }

    fn jitter(&self, rng: &mut ChaCha8Rng) {
        if self.jitter_ms > 0 {
            std::thread::sleep(Duration::from_millis(rng.random_range(0..=self.jitter_ms)));
        }
    }
}

/// Tracks how long the server has been unreachable in buffer mode.
struct Outage {
    since: Option<Instant>,
}

impl Outage {
    /// Whether to keep waiting after a failed connection attempt.
    fn tolerate(&mut self, cfg: &StreamConfig) -> bool {
        let since = *self.since.get_or_insert_with(Instant::now);
        if cfg.buffer && since.elapsed() < cfg.buffer_timeout {
            std::thread::sleep(cfg.retry_interval);
            true
        } else {
            false
        }
    }
}

fn last_t(chunk: &[SensorFrame]) -> u64 {
    chunk.iter().map(|f| f.t_ms).max().unwrap_or(0)
}

/// Posts the frames in batches, resending each batch until the server confirms it.
pub fn stream_http(
    client: &ApiClient,
    session: Uuid,
    frames: &[SensorFrame],
    cfg: &StreamConfig,
) -> Result<TransmissionReport, StreamError> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pacer = Pacer::new(cfg, frames);
    let mut outage = Outage { since: None };
    let mut rep = TransmissionReport::default();
    for chunk in frames.chunks(cfg.batch_frames.max(1)) {
        pacer.until(last_t(chunk));
        rep.sent += chunk.len() as u64;
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > cfg.max_attempts {
                return Err(StreamError::TooManyAttempts(cfg.max_attempts));
            }
            pacer.jitter(&mut rng);
            let lost = rng.random::<f64>() < cfg.loss;
            if lost && rng.random_bool(0.5) {
                rep.lost_requests += 1;
                continue;
            }
            rep.transmissions += 1;
            let reply = match client.post_frames(session, chunk) {
                Ok(r) => r,
                Err(ClientError::Connection { message, .. }) => {
                    if outage.tolerate(cfg) {
                        rep.reconnects += 1;
                        attempts -= 1;
                        continue;
                    }
                    return Err(StreamError::ConnectionRefused(message));
                }
                Err(e) => return Err(StreamError::Protocol(e.to_string())),
            };
            outage.since = None;
            if lost {
                rep.lost_responses += 1;
                continue;
            }
            match reply.status {
                200 => {
                    let v: Value = reply.json().map_err(|e| StreamError::Protocol(e.to_string()))?;
                    rep.accepted += v["accepted"].as_u64().unwrap_or(0);
                    rep.duplicates += v["duplicates"].as_u64().unwrap_or(0);
                    rep.acked += chunk.len() as u64;
                    break;
                }
                401 | 403 => return Err(StreamError::AuthFailed(reply.text())),
                s if s >= 500 => std::thread::sleep(cfg.retry_interval),
                s => return Err(StreamError::Rejected { status: s, body: reply.text() }),
            }
        }
    }
    rep.elapsed_s = start.elapsed().as_secs_f64();
    Ok(rep)
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
struct Ack {
    received: u64,
    accepted: u64,
    duplicates: u64,
}

struct Link {
    stream: TcpStream,
    last: Ack,
}

fn read_json(s: &mut impl Read) -> Result<Value, StreamError> {
    let msg = read_framed(s)?.ok_or_else(|| StreamError::Protocol("connection closed by server".into()))?;
    serde_json::from_slice(&msg).map_err(|e| StreamError::Protocol(format!("bad reply: {e}")))
}

fn server_error(v: &Value) -> StreamError {
    let code = v["code"].as_str().unwrap_or("error");
    let message = v["message"].as_str().unwrap_or("").to_string();
    match code {
        "unauthorized" | "forbidden" => StreamError::AuthFailed(message),
        _ => StreamError::Rejected { status: 0, body: format!("{code}: {message}") },
    }
}

fn connect(addr: &str, token: &str, session: Uuid) -> Result<Link, StreamError> {
    let mut stream = TcpStream::connect(addr).map_err(|e| StreamError::ConnectionRefused(format!("{addr}: {e}")))?;
    stream.set_nodelay(true)?;
    stream.set_read_timeout(Some(Duration::from_secs(60)))?;
    let hello = json!({ "token": token, "session_id": session });
    write_framed(&mut stream, hello.to_string().as_bytes())?;
    let reply = read_json(&mut stream)?;
    if reply["status"] != "ok" {
        return Err(server_error(&reply));
    }
    Ok(Link { stream, last: Ack::default() })
}

/// Sends one window and syncs. Returns whether the server saw every packet.
fn send_window(link: &mut Link, packets: &[[u8; 68]], drop: bool) -> Result<bool, StreamError> {
    {
        let mut w = BufWriter::new(&link.stream);
        if !drop {
            for p in packets {
                write_framed(&mut w, p)?;
            }
        }
        write_framed(&mut w, br#"{"type":"sync"}"#)?;
        w.flush()?;
    }
    let v = read_json(&mut link.stream)?;
    if v["type"] != "ack" {
        return Err(server_error(&v));
    }
    let ack: Ack = serde_json::from_value(v).map_err(|e| StreamError::Protocol(e.to_string()))?;
    let complete = ack.received - link.last.received == packets.len() as u64;
    link.last = ack;
    Ok(complete)
}

/// Streams the frames as wire packets, syncing every `sync_every` packets and
/// resending any window the server did not fully receive.
pub fn stream_tcp(
    addr: &str,
    token: &str,
    session: Uuid,
    frames: &[SensorFrame],
    cfg: &StreamConfig,
) -> Result<TransmissionReport, StreamError> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pacer = Pacer::new(cfg, frames);
    let mut outage = Outage { since: None };
    let mut rep = TransmissionReport::default();
    let mut link: Option<Link> = None;
    // counts of connections already closed
    let mut closed = Ack::default();

    for chunk in frames.chunks(cfg.sync_every.max(1)) {
        pacer.until(last_t(chunk));
        let packets: Vec<[u8; 68]> = chunk.iter().map(serialize).collect();
        rep.sent += packets.len() as u64;
        let mut attempts = 0;
        loop {
            attempts += 1;
            if attempts > cfg.max_attempts {
                return Err(StreamError::TooManyAttempts(cfg.max_attempts));
            }
            if link.is_none() {
                match connect(addr, token, session) {
                    Ok(l) => {
                        outage.since = None;
                        link = Some(l);
                    }
                    Err(e @ (StreamError::ConnectionRefused(_) | StreamError::Io(_))) => {
                        if outage.tolerate(cfg) {
                            rep.reconnects += 1;
                            attempts -= 1;
                            continue;
                        }
                        return Err(StreamError::ConnectionRefused(e.to_string()));
                    }
                    Err(e) => return Err(e),
                }
            }
            pacer.jitter(&mut rng);
            let lost = rng.random::<f64>() < cfg.loss;
            if lost {
                rep.lost_requests += 1;
            } else {
                rep.transmissions += 1;
            }
            let l = link.as_mut().expect("connected above");
            match send_window(l, &packets, lost) {
                Ok(true) => {
                    rep.acked += packets.len() as u64;
                    break;
                }
                Ok(false) => continue,
                Err(StreamError::Io(_)) | Err(StreamError::Protocol(_)) if cfg.buffer => {
                    let old = link.take().expect("connected above");
                    closed.accepted += old.last.accepted;
                    closed.duplicates += old.last.duplicates;
                    if !outage.tolerate(cfg) {
                        return Err(StreamError::ConnectionRefused("server went away".into()));
                    }
                    rep.reconnects += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
    let (accepted, duplicates) = link.as_ref().map_or((0, 0), |l| (l.last.accepted, l.last.duplicates));
    rep.accepted = closed.accepted + accepted;
    rep.duplicates = closed.duplicates + duplicates;
    rep.elapsed_s = start.elapsed().as_secs_f64();
    Ok(rep)
}
