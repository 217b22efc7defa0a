//! Framed two-party channel with per-phase byte and round accounting.
//!
//! Frame layout: phase tag (u8), payload length (u32 LE), payload.

pub mod wire;

use std::io::{Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::sync::mpsc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FRAME_HEADER: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Setup,
    Offline,
    Online,
    Nonlinear,
}

impl Phase {
    pub const ALL: [Phase; 4] = [Phase::Setup, Phase::Offline, Phase::Online, Phase::Nonlinear];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Result<Phase> {
        Phase::ALL.get(tag as usize).copied().ok_or_else(|| Error::decode(format!("unknown phase tag {tag}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Setup => "setup",
            Phase::Offline => "offline",
            Phase::Online => "online",
            Phase::Nonlinear => "nonlinear",
        }
    }
}

/// Carries whole frames between the two endpoints, in order.
pub trait Link: Send {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()>;
    fn recv_frame(&mut self) -> Result<Vec<u8>>;
}

struct QueueLink {
    tx: mpsc::Sender<Vec<u8>>,
    rx: mpsc::Receiver<Vec<u8>>,
}

impl Link for QueueLink {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        self.tx.send(frame).map_err(|_| Error::ChannelClosed)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        self.rx.recv().map_err(|_| Error::ChannelClosed)
    }
}

struct TcpLink {
    stream: TcpStream,
}

impl Link for TcpLink {
    fn send_frame(&mut self, frame: Vec<u8>) -> Result<()> {
        self.stream.write_all(&frame).map_err(closed_or_io)?;
        self.stream.flush().map_err(closed_or_io)
    }

    fn recv_frame(&mut self) -> Result<Vec<u8>> {
        let mut header = [0u8; FRAME_HEADER];
        self.stream.read_exact(&mut header).map_err(closed_or_io)?;
        let len = u32::from_le_bytes(header[1..5].try_into().unwrap()) as usize;
        let mut frame = Vec::with_capacity(FRAME_HEADER + len);
        frame.extend_from_slice(&header);
        frame.resize(FRAME_HEADER + len, 0);
        self.stream.read_exact(&mut frame[FRAME_HEADER..]).map_err(closed_or_io)?;
        Ok(frame)
    }
}

fn closed_or_io(e: std::io::Error) -> Error {
    use std::io::ErrorKind::*;
    match e.kind() {
        UnexpectedEof | BrokenPipe | ConnectionReset | ConnectionAborted => Error::ChannelClosed,
        _ => Error::Io(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Sent,
    Received,
}

/// One frame as seen by an endpoint, recorded when transcript capture is on.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub dir: Direction,
    pub phase: Phase,
    pub payload: Vec<u8>,
}

/// Additive link-cost model: each frame costs serialization time plus half the ping.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetSim {
    pub bandwidth_mbps: f64,
    pub ping_ms: f64,
    /// Actually sleep for the simulated duration instead of only accounting for it.
    pub sleep: bool,
}

impl NetSim {
    pub fn lan() -> Self {
        NetSim { bandwidth_mbps: 400.0, ping_ms: 0.5, sleep: false }
    }

    pub fn frame_seconds(&self, frame_bytes: usize) -> f64 {
        frame_bytes as f64 * 8.0 / (self.bandwidth_mbps * 1e6) + self.ping_ms * 1e-3 / 2.0
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub bytes_sent: u64,
    pub bytes_received: u64,
    pub messages_sent: u64,
    pub messages_received: u64,
    pub rounds: u64,
    pub sim_seconds: f64,
}

impl PhaseStats {
    pub fn bytes(&self) -> u64 {
        self.bytes_sent + self.bytes_received
    }

    fn add(&mut self, o: &PhaseStats) {
        self.bytes_sent += o.bytes_sent;
        self.bytes_received += o.bytes_received;
        self.messages_sent += o.messages_sent;
        self.messages_received += o.messages_received;
        self.rounds += o.rounds;
        self.sim_seconds += o.sim_seconds;
    }

    fn sub(&mut self, o: &PhaseStats) {
        self.bytes_sent -= o.bytes_sent;
        self.bytes_received -= o.bytes_received;
        self.messages_sent -= o.messages_sent;
        self.messages_received -= o.messages_received;
        self.rounds -= o.rounds;
        self.sim_seconds -= o.sim_seconds;
    }
}

/// Per-phase totals seen from one endpoint. Byte counts include frame headers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CommStats {
    phases: [PhaseStats; 4],
}

impl CommStats {
    pub fn phase(&self, p: Phase) -> &PhaseStats {
        &self.phases[p.index()]
    }

    pub fn total(&self) -> PhaseStats {
        let mut t = PhaseStats::default();
        for p in &self.phases {
            t.add(p);
        }
        t
    }

    pub fn since(&self, earlier: &CommStats) -> CommStats {
        let mut d = *self;
        for (a, b) in d.phases.iter_mut().zip(&earlier.phases) {
            a.sub(b);
        }
        d
    }

    pub fn report(&self) -> CommReport {
        CommReport {
            phases: Phase::ALL.iter().map(|&p| (p, self.phases[p.index()])).collect(),
            total: self.total(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommReport {
    pub phases: Vec<(Phase, PhaseStats)>,
    pub total: PhaseStats,
}

pub struct Endpoint {
    link: Box<dyn Link>,
    stats: CommStats,
    last_dir: Option<Direction>,
    sim: Option<NetSim>,
    transcript: Option<Vec<Frame>>,
}

impl Endpoint {
    pub fn new(link: Box<dyn Link>) -> Self {
        Endpoint { link, stats: CommStats::default(), last_dir: None, sim: None, transcript: None }
    }

    /// Two connected in-process endpoints.
    pub fn pair() -> (Endpoint, Endpoint) {
        let (tx_a, rx_b) = mpsc::channel();
        let (tx_b, rx_a) = mpsc::channel();
        (
            Endpoint::new(Box::new(QueueLink { tx: tx_a, rx: rx_a })),
            Endpoint::new(Box::new(QueueLink { tx: tx_b, rx: rx_b })),
        )
    }

    pub fn from_stream(stream: TcpStream) -> Result<Self> {
        stream.set_nodelay(true)?;
        Ok(Endpoint::new(Box::new(TcpLink { stream })))
    }

    pub fn connect(addr: impl ToSocketAddrs) -> Result<Self> {
        Self::from_stream(TcpStream::connect(addr)?)
    }

    pub fn set_netsim(&mut self, sim: Option<NetSim>) {
        self.sim = sim;
    }

    /// Start (or stop) recording every frame sent and received.
    pub fn record_transcript(&mut self, on: bool) {
        self.transcript = on.then(Vec::new);
    }

    pub fn take_transcript(&mut self) -> Vec<Frame> {
        self.transcript.as_mut().map(std::mem::take).unwrap_or_default()
    }

    pub fn stats(&self) -> &CommStats {
        &self.stats
    }

    pub fn comm_report(&self) -> CommReport {
        self.stats.report()
    }

    fn account(&mut self, dir: Direction, phase: Phase, frame_bytes: usize) {
        let s = &mut self.stats.phases[phase.index()];
        match dir {
            Direction::Sent => {
                s.bytes_sent += frame_bytes as u64;
                s.messages_sent += 1;
            }
            Direction::Received => {
                s.bytes_received += frame_bytes as u64;
                s.messages_received += 1;
            }
        }
        if self.last_dir.is_some_and(|d| d != dir) {
            s.rounds += 1;
        }
        self.last_dir = Some(dir);
        if let Some(sim) = self.sim {
            let secs = sim.frame_seconds(frame_bytes);
            s.sim_seconds += secs;
            if sim.sleep {
                std::thread::sleep(Duration::from_secs_f64(secs));
            }
        }
    }

    pub fn send(&mut self, phase: Phase, payload: &[u8]) -> Result<()> {
        if payload.len() > u32::MAX as usize {
            return Err(Error::Contract("payload exceeds 4 GiB frame limit".into()));
        }
        let mut frame = Vec::with_capacity(FRAME_HEADER + payload.len());
        frame.push(phase.tag());
        frame.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        frame.extend_from_slice(payload);
        let len = frame.len();
        self.link.send_frame(frame)?;
        self.account(Direction::Sent, phase, len);
        if let Some(t) = &mut self.transcript {
            t.push(Frame { dir: Direction::Sent, phase, payload: payload.to_vec() });
        }
        Ok(())
    }

    pub fn recv_any(&mut self) -> Result<(Phase, Vec<u8>)> {
        let mut frame = self.link.recv_frame()?;
        if frame.len() < FRAME_HEADER {
            return Err(Error::decode("short frame"));
        }
        let phase = Phase::from_tag(frame[0])?;
        let len = u32::from_le_bytes(frame[1..5].try_into().unwrap()) as usize;
        if frame.len() != FRAME_HEADER + len {
            return Err(Error::decode("frame length does not match header"));
        }
        let total = frame.len();
        self.account(Direction::Received, phase, total);
        let payload = frame.split_off(FRAME_HEADER);
        if let Some(t) = &mut self.transcript {
            t.push(Frame { dir: Direction::Received, phase, payload: payload.clone() });
        }
        Ok((phase, payload))
    }

    /// Receive the next frame, which must carry the expected phase tag.
    pub fn recv(&mut self, expected: Phase) -> Result<Vec<u8>> {
        let (got, payload) = self.recv_any()?;
        if got != expected {
            return Err(Error::TagMismatch { expected, got });
        }
        Ok(payload)
    }
}
