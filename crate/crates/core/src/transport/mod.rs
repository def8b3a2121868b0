//! Edge/cloud split over frames.
//!
//! Two backends share the [`Channel`] trait: an in-process simulated link
//! with a latency/bandwidth model, and a length-prefixed byte stream (TCP in
//! practice). Both carry identical frames, so a session commits the same
//! tokens whichever one is used.

pub mod framelog;
pub mod scanner;
pub mod wire;

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::ProtocolConfig;
use crate::error::{Error, Result};
use crate::models::TokenModel;
use crate::protocol::{CloudNode, EdgeNode, RoundTrace, SessionModels, Verdict};
use crate::vocab::{TokenId, Vocabulary};
use wire::{Done, Frame, Hello, HelloAck, HelloStatus, MsgType};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

pub trait Channel {
    fn send(&mut self, frame: &Frame) -> Result<()>;
    fn recv(&mut self) -> Result<Frame>;
}

impl<C: Channel + ?Sized> Channel for &mut C {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        (**self).send(frame)
    }
    fn recv(&mut self) -> Result<Frame> {
        (**self).recv()
    }
}

/// One-way latency and bandwidth of a link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelModel {
    pub one_way_latency_ms: f64,
    /// Bytes per second. May be infinite.
    pub bandwidth_bytes_per_s: f64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self::ideal()
    }
}

impl ChannelModel {
    pub fn new(one_way_latency_ms: f64, bandwidth_bytes_per_s: f64) -> Result<Self> {
        let m = Self {
            one_way_latency_ms,
            bandwidth_bytes_per_s,
        };
        m.validate()?;
        Ok(m)
    }

    /// Zero latency, unlimited bandwidth.
    pub fn ideal() -> Self {
        Self {
            one_way_latency_ms: 0.0,
            bandwidth_bytes_per_s: f64::INFINITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.one_way_latency_ms.is_finite() && self.one_way_latency_ms >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "latency {} ms",
                self.one_way_latency_ms
            )));
        }
        if !(self.bandwidth_bytes_per_s > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bandwidth {} B/s",
                self.bandwidth_bytes_per_s
            )));
        }
        Ok(())
    }

    pub fn delivery_ms(&self, bytes: usize) -> f64 {
        self.one_way_latency_ms + bytes as f64 / self.bandwidth_bytes_per_s * 1000.0
    }
}

/// Byte and frame counters per direction, plus modeled transfer time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LinkStats {
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    pub uplink_frames: u64,
    pub downlink_frames: u64,
    pub transfer_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Up,
    Down,
}

/// One end of an in-process simulated link. Never times out.
pub struct SimEndpoint {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    sends: Direction,
    model: ChannelModel,
    stats: Arc<Mutex<LinkStats>>,
}

/// Returns the edge end, the cloud end, and the shared counters.
pub fn simulated_pair(model: ChannelModel) -> (SimEndpoint, SimEndpoint, Arc<Mutex<LinkStats>>) {
    let (up_tx, up_rx) = channel();
    let (down_tx, down_rx) = channel();
    let stats = Arc::new(Mutex::new(LinkStats::default()));
    let edge = SimEndpoint {
        tx: up_tx,
        rx: down_rx,
        sends: Direction::Up,
        model,
        stats: stats.clone(),
    };
    let cloud = SimEndpoint {
        tx: down_tx,
        rx: up_rx,
        sends: Direction::Down,
        model,
        stats: stats.clone(),
    };
    (edge, cloud, stats)
}

impl Channel for SimEndpoint {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        let bytes = frame.encode();
        {
            let mut s = self.stats.lock().expect("link stats poisoned");
            let n = bytes.len() as u64;
            match self.sends {
                Direction::Up => {
                    s.uplink_bytes += n;
                    s.uplink_frames += 1;
                }
                Direction::Down => {
                    s.downlink_bytes += n;
                    s.downlink_frames += 1;
                }
            }
            s.transfer_ms += self.model.delivery_ms(bytes.len());
        }
        self.tx
            .send(bytes)
            .map_err(|_| Error::Protocol("peer hung up".into()))
    }

    fn recv(&mut self) -> Result<Frame> {
        let bytes = self
            .rx
            .recv()
            .map_err(|_| Error::Protocol("peer hung up".into()))?;
        let (frame, used) = Frame::decode(&bytes)?;
        debug_assert_eq!(used, bytes.len());
        Ok(frame)
    }
}

/// Frames over any byte stream, one header-prefixed frame at a time.
pub struct StreamChannel<S> {
    stream: S,
}

impl<S: Read + Write> StreamChannel<S> {
    pub fn new(stream: S) -> Self {
        Self { stream }
    }

    pub fn into_inner(self) -> S {
        self.stream
    }
}

impl StreamChannel<TcpStream> {
    pub fn tcp(stream: TcpStream, timeout: Option<Duration>) -> Result<Self> {
        stream.set_read_timeout(timeout)?;
        stream.set_write_timeout(timeout)?;
        stream.set_nodelay(true)?;
        Ok(Self::new(stream))
    }

    pub fn connect<A: ToSocketAddrs>(addr: A, timeout: Option<Duration>) -> Result<Self> {
        Self::tcp(TcpStream::connect(addr)?, timeout)
    }
}

fn io_to_error(e: std::io::Error) -> Error {
    match e.kind() {
        ErrorKind::WouldBlock | ErrorKind::TimedOut => Error::Timeout,
        ErrorKind::UnexpectedEof | ErrorKind::ConnectionReset | ErrorKind::BrokenPipe => {
            Error::Protocol(format!("peer hung up: {e}"))
        }
        _ => Error::Io(e),
    }
}

impl<S: Read + Write> Channel for StreamChannel<S> {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        self.stream
            .write_all(&frame.encode())
            .map_err(io_to_error)?;
        self.stream.flush().map_err(io_to_error)
    }

    fn recv(&mut self) -> Result<Frame> {
        match Frame::read_from(&mut self.stream) {
            Err(Error::Io(e)) => Err(io_to_error(e)),
            other => other,
        }
    }
}

/// Keeps a copy of every frame passing through.
pub struct Recorder<C> {
    inner: C,
    pub sent: Vec<Frame>,
    pub received: Vec<Frame>,
}

impl<C: Channel> Recorder<C> {
    pub fn new(inner: C) -> Self {
        Self {
            inner,
            sent: Vec::new(),
            received: Vec::new(),
        }
    }
}

impl<C: Channel> Channel for Recorder<C> {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        self.inner.send(frame)?;
        self.sent.push(frame.clone());
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame> {
        let f = self.inner.recv()?;
        self.received.push(f.clone());
        Ok(f)
    }
}

/// Feeds recorded uplink frames to a cloud and collects what it sends back.
struct Replay<'a> {
    uplink: std::slice::Iter<'a, Frame>,
    downlink: Vec<Frame>,
}

impl Channel for Replay<'_> {
    fn send(&mut self, frame: &Frame) -> Result<()> {
        self.downlink.push(frame.clone());
        Ok(())
    }

    fn recv(&mut self) -> Result<Frame> {
        self.uplink
            .next()
            .cloned()
            .ok_or_else(|| Error::Protocol("frame log ended before DONE".into()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeReport {
    pub sequence: Vec<TokenId>,
    pub prompt_len: usize,
    /// Per-round traces; α values are only known to the cloud and left empty.
    pub traces: Vec<RoundTrace>,
    pub verdicts: Vec<Verdict>,
}

impl EdgeReport {
    pub fn generated(&self) -> &[TokenId] {
        &self.sequence[self.prompt_len..]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CloudReport {
    pub mirror: Vec<TokenId>,
    pub prompt_len: usize,
    pub verdicts: Vec<Verdict>,
    pub alphas: Vec<Vec<f64>>,
}

/// Drives a fresh edge node to completion over `channel`.
pub fn run_edge<C: Channel>(
    edge: &mut EdgeNode,
    vocab_hash: u64,
    mut channel: C,
) -> Result<EdgeReport> {
    if edge.round() != 0 || edge.outstanding().is_some() {
        return Err(Error::Protocol("edge node already started".into()));
    }
    let prompt = edge.history()[..edge.prompt_len()].to_vec();
    channel.send(&Hello::from_config(edge.config(), vocab_hash, &prompt)?.encode())?;
    let ack = HelloAck::decode(&channel.recv()?)?;
    match ack.status {
        HelloStatus::Accepted if ack.vocab_hash == vocab_hash => {}
        HelloStatus::Accepted => {
            return Err(Error::HandshakeRefused(format!(
                "cloud acknowledged vocabulary {:016x}, edge has {vocab_hash:016x}",
                ack.vocab_hash
            )))
        }
        HelloStatus::VocabMismatch => {
            return Err(Error::HandshakeRefused(format!(
                "vocabulary hash mismatch: edge {vocab_hash:016x}, cloud {:016x}",
                ack.vocab_hash
            )))
        }
        HelloStatus::BadConfig => {
            return Err(Error::HandshakeRefused(
                "cloud rejected the session parameters".into(),
            ))
        }
    }

    let mut traces = Vec::new();
    let mut verdicts = Vec::new();
    while !edge.is_finished() {
        let delta = edge.take_history_delta();
        let batch = edge.draft()?;
        let up = wire::encode_draft(&batch, delta)?;
        channel.send(&up)?;
        let down = channel.recv()?;
        let verdict = wire::decode_verdict(&down)?;
        let outcome = edge.apply_verdict(&verdict)?;
        log::debug!(
            "round {}: accepted {}/{} recovered {:?}",
            batch.seq_no,
            outcome.accepted,
            batch.len(),
            outcome.recovered
        );
        traces.push(RoundTrace {
            round: batch.seq_no,
            drafted: batch.token_ids,
            alphas: Vec::new(),
            accepted_count: outcome.accepted,
            recovery_token: outcome.recovered,
            uplink_bytes: up.encoded_len() as u64,
            downlink_bytes: down.encoded_len() as u64,
            clock_ms: 0.0,
        });
        verdicts.push(verdict);
    }
    let done = Done {
        rounds: edge.round(),
        delta: edge.take_history_delta(),
    };
    channel.send(&done.encode())?;
    Ok(EdgeReport {
        sequence: edge.history().to_vec(),
        prompt_len: edge.prompt_len(),
        traces,
        verdicts,
    })
}

/// Serves one session: handshake, then a VERDICT per DRAFT until DONE.
pub fn run_cloud<C: Channel>(
    generalist: Arc<dyn TokenModel>,
    generic: Arc<dyn TokenModel>,
    vocab: &Vocabulary,
    mut channel: C,
) -> Result<CloudReport> {
    let vocab_hash = vocab.fingerprint();
    let hello = Hello::decode(&channel.recv()?)?;
    if hello.vocab_hash != vocab_hash {
        channel.send(
            &HelloAck {
                status: HelloStatus::VocabMismatch,
                vocab_hash,
            }
            .encode(),
        )?;
        return Err(Error::HandshakeRefused(format!(
            "vocabulary hash mismatch: edge {:016x}, cloud {vocab_hash:016x}",
            hello.vocab_hash
        )));
    }
    let mut cloud = match CloudNode::new(
        generalist,
        generic,
        hello.settings(),
        &hello.prompt,
        vocab.eos_id(),
    ) {
        Ok(c) => c,
        Err(e) => {
            channel.send(
                &HelloAck {
                    status: HelloStatus::BadConfig,
                    vocab_hash,
                }
                .encode(),
            )?;
            return Err(Error::HandshakeRefused(e.to_string()));
        }
    };
    channel.send(
        &HelloAck {
            status: HelloStatus::Accepted,
            vocab_hash,
        }
        .encode(),
    )?;

    let mut verdicts = Vec::new();
    let mut alphas = Vec::new();
    loop {
        let frame = channel.recv()?;
        match frame.msg_type {
            MsgType::Draft => {
                let (batch, delta) = wire::decode_draft(&frame)?;
                let out = cloud.handle_draft(&batch, delta)?;
                channel.send(&wire::encode_verdict(&out.verdict)?)?;
                verdicts.push(out.verdict);
                alphas.push(out.alphas);
            }
            MsgType::Done => {
                let done = Done::decode(&frame)?;
                cloud.finish(done.rounds, done.delta)?;
                break;
            }
            other => {
                return Err(Error::Protocol(format!(
                    "unexpected {other:?} frame from edge"
                )))
            }
        }
    }
    Ok(CloudReport {
        mirror: cloud.mirror().to_vec(),
        prompt_len: hello.prompt.len(),
        verdicts,
        alphas,
    })
}

/// Re-runs the cloud over a recorded uplink log, returning the downlink frames
/// it would send.
pub fn replay_cloud(
    generalist: Arc<dyn TokenModel>,
    generic: Arc<dyn TokenModel>,
    vocab: &Vocabulary,
    uplink: &[Frame],
) -> Result<Vec<Frame>> {
    let mut replay = Replay {
        uplink: uplink.iter(),
        downlink: Vec::new(),
    };
    run_cloud(generalist, generic, vocab, &mut replay)?;
    if replay.uplink.next().is_some() {
        return Err(Error::Protocol("frames after DONE in log".into()));
    }
    Ok(replay.downlink)
}

/// A finished split session with both sides' views and the raw frames.
#[derive(Debug, Clone)]
pub struct SplitRun {
    pub edge: EdgeReport,
    pub cloud: CloudReport,
    pub uplink: Vec<Frame>,
    pub downlink: Vec<Frame>,
}

impl SplitRun {
    /// Edge traces with the cloud's α values filled in.
    pub fn traces(&self) -> Vec<RoundTrace> {
        self.edge
            .traces
            .iter()
            .zip(&self.cloud.alphas)
            .map(|(t, a)| RoundTrace {
                alphas: a.clone(),
                ..t.clone()
            })
            .collect()
    }

    fn check(self) -> Result<Self> {
        if self.cloud.mirror != self.edge.sequence {
            return Err(Error::Protocol(
                "cloud mirror diverged from edge history".into(),
            ));
        }
        Ok(self)
    }
}

/// Runs edge and cloud on two threads joined by a simulated link.
pub fn run_simulated(
    config: &ProtocolConfig,
    models: &SessionModels,
    prompt: &[TokenId],
    vocab: &Vocabulary,
    link: ChannelModel,
) -> Result<(SplitRun, LinkStats)> {
    link.validate()?;
    let mut edge = EdgeNode::new(models.specialist.clone(), config, prompt, vocab)?;
    let (edge_end, cloud_end, stats) = simulated_pair(link);
    let (generalist, generic) = (models.generalist.clone(), models.generic.clone());
    let (edge_res, cloud_res) = std::thread::scope(|s| {
        let cloud = s.spawn(move || run_cloud(generalist, generic, vocab, cloud_end));
        let mut rec = Recorder::new(edge_end);
        let res = run_edge(&mut edge, vocab.fingerprint(), &mut rec);
        let Recorder {
            inner,
            sent,
            received,
        } = rec;
        // Closing the edge end unblocks a cloud still waiting for frames.
        drop(inner);
        let edge_res = res.map(|r| (r, sent, received));
        (edge_res, cloud.join().expect("cloud thread panicked"))
    });
    let (edge_report, uplink, downlink) = edge_res?;
    let run = SplitRun {
        edge: edge_report,
        cloud: cloud_res?,
        uplink,
        downlink,
    }
    .check()?;
    let stats = *stats.lock().expect("link stats poisoned");
    Ok((run, stats))
}

/// Connects to a cloud at `addr` and runs one session as the edge.
pub fn connect_edge<A: ToSocketAddrs>(
    addr: A,
    edge: &mut EdgeNode,
    vocab_hash: u64,
    timeout: Option<Duration>,
) -> Result<(EdgeReport, Vec<Frame>, Vec<Frame>)> {
    let mut rec = Recorder::new(StreamChannel::connect(addr, timeout)?);
    let report = run_edge(edge, vocab_hash, &mut rec)?;
    Ok((report, rec.received, rec.sent))
}

/// One served session with the frames the cloud saw.
#[derive(Debug, Clone)]
pub struct ServedSession {
    pub peer: Option<std::net::SocketAddr>,
    pub result: std::result::Result<CloudReport, String>,
    pub uplink: Vec<Frame>,
    pub downlink: Vec<Frame>,
}

/// Accepts connections and serves each on its own thread. Stops after
/// `limit` connections when given; otherwise runs until accept fails.
pub fn serve(
    listener: &TcpListener,
    generalist: Arc<dyn TokenModel>,
    generic: Arc<dyn TokenModel>,
    vocab: &Vocabulary,
    timeout: Option<Duration>,
    limit: Option<usize>,
    mut on_session: impl FnMut(ServedSession),
) -> Result<()> {
    std::thread::scope(|s| -> Result<()> {
        let (tx, rx) = channel::<ServedSession>();
        let mut handles = Vec::new();
        for (index, conn) in listener.incoming().enumerate() {
            let stream = conn?;
            let peer = stream.peer_addr().ok();
            log::info!("session from {peer:?}");
            let (g, m, tx) = (generalist.clone(), generic.clone(), tx.clone());
            handles.push(s.spawn(move || {
                let served = match StreamChannel::tcp(stream, timeout) {
                    Ok(ch) => {
                        let mut rec = Recorder::new(ch);
                        let result = run_cloud(g, m, vocab, &mut rec).map_err(|e| e.to_string());
                        ServedSession {
                            peer,
                            result,
                            uplink: rec.received,
                            downlink: rec.sent,
                        }
                    }
                    Err(e) => ServedSession {
                        peer,
                        result: Err(e.to_string()),
                        uplink: Vec::new(),
                        downlink: Vec::new(),
                    },
                };
                let _ = tx.send(served);
            }));
            while let Ok(done) = rx.try_recv() {
                on_session(done);
            }
            if limit.is_some_and(|l| index + 1 >= l) {
                break;
            }
        }
        drop(tx);
        for h in handles {
            h.join().expect("session thread panicked");
        }
        for done in rx {
            on_session(done);
        }
        Ok(())
    })
}
