//! Frame layout, little-endian throughout:
//!
//! ```text
//! "SPST" | version u8 | msg_type u8 | payload_len u32 | payload
//! ```
//!
//! | type | payload |
//! |------|---------|
//! | HELLO (edge) | λ f64, β f64, K u16, top_k u32, max_len u32, mode u8, seed u64, vocab_hash u64, n u32, n×u32 prompt |
//! | HELLO (cloud) | status u8, vocab_hash u64 |
//! | DRAFT | seq u32, count u16, count×u32 ids, [delta u32] |
//! | VERDICT | seq u32, accepted u16, flag u8, [top_k u16, top_k×(u32 id, f32 value)] |
//! | DONE | rounds u32, [delta u32] |

use std::io::Read;

use crate::config::{DecodeMode, ProtocolConfig, ThresholdMode};
use crate::error::{Error, Result};
use crate::protocol::{CloudSettings, DraftBatch, SparseSteeringPayload, SteeringEntry, Verdict};
use crate::vocab::TokenId;

pub const MAGIC: [u8; 4] = *b"SPST";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 10;
/// Frames larger than this are rejected before allocation.
pub const MAX_PAYLOAD: usize = 1 << 24;

const HELLO_FIXED: usize = 8 + 8 + 2 + 4 + 4 + 1 + 8 + 8 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MsgType {
    Hello = 1,
    Draft = 2,
    Verdict = 3,
    Done = 4,
}

impl TryFrom<u8> for MsgType {
    type Error = Error;

    fn try_from(b: u8) -> Result<Self> {
        Ok(match b {
            1 => Self::Hello,
            2 => Self::Draft,
            3 => Self::Verdict,
            4 => Self::Done,
            other => return Err(Error::Wire(format!("unknown message type {other}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(msg_type: MsgType, payload: Vec<u8>) -> Self {
        Self { msg_type, payload }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&(self.payload.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// Decodes one frame from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8]) -> Result<(Frame, usize)> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Wire(format!(
                "truncated header ({} bytes)",
                bytes.len()
            )));
        }
        let len = parse_header(bytes[..HEADER_LEN].try_into().expect("header slice"))?;
        let msg_type = MsgType::try_from(bytes[5])?;
        let end = HEADER_LEN + len;
        if bytes.len() < end {
            return Err(Error::Wire(format!(
                "truncated payload: need {len}, have {}",
                bytes.len() - HEADER_LEN
            )));
        }
        Ok((Frame::new(msg_type, bytes[HEADER_LEN..end].to_vec()), end))
    }

    /// Decodes a concatenation of frames, failing on any trailing garbage.
    pub fn decode_all(mut bytes: &[u8]) -> Result<Vec<Frame>> {
        let mut frames = Vec::new();
        while !bytes.is_empty() {
            let (f, n) = Frame::decode(bytes)?;
            frames.push(f);
            bytes = &bytes[n..];
        }
        Ok(frames)
    }

    /// Reads exactly one frame from a byte stream.
    pub fn read_from<R: Read + ?Sized>(r: &mut R) -> Result<Frame> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        let len = parse_header(&header)?;
        let msg_type = MsgType::try_from(header[5])?;
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)?;
        Ok(Frame::new(msg_type, payload))
    }

    fn expect(&self, t: MsgType) -> Result<()> {
        if self.msg_type != t {
            return Err(Error::Wire(format!(
                "expected {t:?}, got {:?}",
                self.msg_type
            )));
        }
        Ok(())
    }
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<usize> {
    if h[..4] != MAGIC {
        return Err(Error::Wire(format!("bad magic {:02x?}", &h[..4])));
    }
    if h[4] != VERSION {
        return Err(Error::Wire(format!("unsupported version {}", h[4])));
    }
    let len = u32::from_le_bytes(h[6..10].try_into().expect("4 bytes")) as usize;
    if len > MAX_PAYLOAD {
        return Err(Error::Wire(format!("payload of {len} bytes exceeds limit")));
    }
    Ok(len)
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf }
    }

    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.buf.len() < N {
            return Err(Error::Wire("payload truncated".into()));
        }
        let (head, rest) = self.buf.split_at(N);
        self.buf = rest;
        Ok(head.try_into().expect("split at N"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take()?))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }

    fn remaining(&self) -> usize {
        self.buf.len()
    }

    fn finish(self) -> Result<()> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(Error::Wire(format!(
                "{} trailing payload bytes",
                self.buf.len()
            )))
        }
    }
}

/// Session parameters sent by the edge before the first draft.
#[derive(Debug, Clone, PartialEq)]
pub struct Hello {
    pub lambda: f64,
    pub beta: f64,
    pub horizon_k: u16,
    pub top_k: u32,
    pub max_len: u32,
    pub mode: DecodeMode,
    pub seed: u64,
    pub vocab_hash: u64,
    pub prompt: Vec<TokenId>,
}

impl Hello {
    pub fn from_config(
        config: &ProtocolConfig,
        vocab_hash: u64,
        prompt: &[TokenId],
    ) -> Result<Self> {
        if config.threshold != ThresholdMode::Fixed {
            return Err(Error::InvalidConfig(
                "exact-partition thresholds need the drafter's distribution and cannot run split"
                    .into(),
            ));
        }
        let narrow = |v: usize, what: &str| -> Result<u32> {
            u32::try_from(v)
                .map_err(|_| Error::InvalidConfig(format!("{what} {v} does not fit the wire")))
        };
        Ok(Self {
            lambda: config.lambda,
            beta: config.beta,
            horizon_k: u16::try_from(config.horizon_k).map_err(|_| {
                Error::InvalidConfig(format!("k {} does not fit the wire", config.horizon_k))
            })?,
            top_k: narrow(config.top_k, "top_k")?,
            max_len: narrow(config.max_len, "max_len")?,
            mode: config.mode,
            seed: config.seed,
            vocab_hash,
            prompt: prompt.to_vec(),
        })
    }

    pub fn settings(&self) -> CloudSettings {
        CloudSettings {
            lambda: self.lambda,
            beta: self.beta,
            horizon_k: self.horizon_k as usize,
            top_k: self.top_k as usize,
            max_len: self.max_len as usize,
            mode: self.mode,
            seed: self.seed,
        }
    }

    pub fn encode(&self) -> Frame {
        let mut p = Vec::with_capacity(HELLO_FIXED + 4 * self.prompt.len());
        p.extend_from_slice(&self.lambda.to_le_bytes());
        p.extend_from_slice(&self.beta.to_le_bytes());
        p.extend_from_slice(&self.horizon_k.to_le_bytes());
        p.extend_from_slice(&self.top_k.to_le_bytes());
        p.extend_from_slice(&self.max_len.to_le_bytes());
        p.push(self.mode.code());
        p.extend_from_slice(&self.seed.to_le_bytes());
        p.extend_from_slice(&self.vocab_hash.to_le_bytes());
        p.extend_from_slice(&(self.prompt.len() as u32).to_le_bytes());
        for id in &self.prompt {
            p.extend_from_slice(&id.to_le_bytes());
        }
        Frame::new(MsgType::Hello, p)
    }

    pub fn decode(frame: &Frame) -> Result<Self> {
        frame.expect(MsgType::Hello)?;
        let mut r = Reader::new(&frame.payload);
        let lambda = r.f64()?;
        let beta = r.f64()?;
        let horizon_k = r.u16()?;
        let top_k = r.u32()?;
        let max_len = r.u32()?;
        let mode_code = r.u8()?;
        let mode = DecodeMode::from_code(mode_code)
            .ok_or_else(|| Error::Wire(format!("unknown decode mode {mode_code}")))?;
        let seed = r.u64()?;
        let vocab_hash = r.u64()?;
        let n = r.u32()? as usize;
        if r.remaining() != 4 * n {
            return Err(Error::Wire(format!(
                "prompt of {n} ids in {} bytes",
                r.remaining()
            )));
        }
        let prompt = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        r.finish()?;
        Ok(Self {
            lambda,
            beta,
            horizon_k,
            top_k,
            max_len,
            mode,
            seed,
            vocab_hash,
            prompt,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum HelloStatus {
    Accepted = 0,
    VocabMismatch = 1,
    BadConfig = 2,
}

/// The cloud's reply to [`Hello`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HelloAck {
    pub status: HelloStatus,
    pub vocab_hash: u64,
}

impl HelloAck {
    pub fn encode(&self) -> Frame {
        let mut p = Vec::with_capacity(9);
        p.push(self.status as u8);
        p.extend_from_slice(&self.vocab_hash.to_le_bytes());
        Frame::new(MsgType::Hello, p)
    }

    pub fn decode(frame: &Frame) -> Result<Self> {
        frame.expect(MsgType::Hello)?;
        let mut r = Reader::new(&frame.payload);
        let status = match r.u8()? {
            0 => HelloStatus::Accepted,
            1 => HelloStatus::VocabMismatch,
            2 => HelloStatus::BadConfig,
            s => return Err(Error::Wire(format!("unknown hello status {s}"))),
        };
        let vocab_hash = r.u64()?;
        r.finish()?;
        Ok(Self { status, vocab_hash })
    }
}

pub fn draft_frame_len(count: usize, has_delta: bool) -> usize {
    HEADER_LEN + 6 + 4 * count + if has_delta { 4 } else { 0 }
}

pub fn verdict_frame_len(v: &Verdict) -> usize {
    HEADER_LEN + 7 + v.recovery.as_ref().map_or(0, |p| 2 + 8 * p.len())
}

/// DRAFT frame; `delta` is the previous round's recovery token, if any.
pub fn encode_draft(batch: &DraftBatch, delta: Option<TokenId>) -> Result<Frame> {
    if batch.is_empty() {
        return Err(Error::Wire("empty draft batch".into()));
    }
    let count = u16::try_from(batch.len())
        .map_err(|_| Error::Wire(format!("draft of {} tokens", batch.len())))?;
    let mut p = Vec::with_capacity(draft_frame_len(batch.len(), delta.is_some()) - HEADER_LEN);
    p.extend_from_slice(&batch.seq_no.to_le_bytes());
    p.extend_from_slice(&count.to_le_bytes());
    for id in &batch.token_ids {
        p.extend_from_slice(&id.to_le_bytes());
    }
    if let Some(d) = delta {
        p.extend_from_slice(&d.to_le_bytes());
    }
    Ok(Frame::new(MsgType::Draft, p))
}

pub fn decode_draft(frame: &Frame) -> Result<(DraftBatch, Option<TokenId>)> {
    frame.expect(MsgType::Draft)?;
    let mut r = Reader::new(&frame.payload);
    let seq_no = r.u32()?;
    let count = r.u16()? as usize;
    if count == 0 {
        return Err(Error::Wire("empty draft batch".into()));
    }
    let has_delta = match r.remaining() {
        n if n == 4 * count => false,
        n if n == 4 * count + 4 => true,
        n => return Err(Error::Wire(format!("draft of {count} ids in {n} bytes"))),
    };
    let token_ids = (0..count).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let delta = if has_delta { Some(r.u32()?) } else { None };
    r.finish()?;
    Ok((DraftBatch { seq_no, token_ids }, delta))
}

pub fn encode_verdict(v: &Verdict) -> Result<Frame> {
    let accepted = u16::try_from(v.accepted_count)
        .map_err(|_| Error::Wire(format!("accepted count {}", v.accepted_count)))?;
    let mut p = Vec::with_capacity(verdict_frame_len(v) - HEADER_LEN);
    p.extend_from_slice(&v.seq_no.to_le_bytes());
    p.extend_from_slice(&accepted.to_le_bytes());
    match &v.recovery {
        None => p.push(0),
        Some(payload) => {
            if payload.is_empty() {
                return Err(Error::Wire("recovery flag with empty payload".into()));
            }
            let k = u16::try_from(payload.len())
                .map_err(|_| Error::Wire(format!("top_k {}", payload.len())))?;
            p.push(1);
            p.extend_from_slice(&k.to_le_bytes());
            for e in &payload.entries {
                p.extend_from_slice(&e.token.to_le_bytes());
                p.extend_from_slice(&e.value.to_le_bytes());
            }
        }
    }
    Ok(Frame::new(MsgType::Verdict, p))
}

pub fn decode_verdict(frame: &Frame) -> Result<Verdict> {
    frame.expect(MsgType::Verdict)?;
    let mut r = Reader::new(&frame.payload);
    let seq_no = r.u32()?;
    let accepted_count = r.u16()? as usize;
    let recovery = match r.u8()? {
        0 => None,
        1 => {
            let k = r.u16()? as usize;
            if k == 0 || r.remaining() != 8 * k {
                return Err(Error::Wire(format!(
                    "steering payload of {k} entries in {} bytes",
                    r.remaining()
                )));
            }
            let entries = (0..k)
                .map(|_| {
                    Ok(SteeringEntry {
                        token: r.u32()?,
                        value: r.f32()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Some(SparseSteeringPayload { entries })
        }
        f => return Err(Error::Wire(format!("unknown verdict flag {f}"))),
    };
    r.finish()?;
    Ok(Verdict {
        seq_no,
        accepted_count,
        recovery,
    })
}

/// End of session: rounds completed and the final recovery token, if the
/// last round ended in one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Done {
    pub rounds: u32,
    pub delta: Option<TokenId>,
}

impl Done {
    pub fn encode(&self) -> Frame {
        let mut p = self.rounds.to_le_bytes().to_vec();
        if let Some(d) = self.delta {
            p.extend_from_slice(&d.to_le_bytes());
        }
        Frame::new(MsgType::Done, p)
    }

    pub fn decode(frame: &Frame) -> Result<Self> {
        frame.expect(MsgType::Done)?;
        let mut r = Reader::new(&frame.payload);
        let rounds = r.u32()?;
        let delta = match r.remaining() {
            0 => None,
            4 => Some(r.u32()?),
            n => return Err(Error::Wire(format!("done frame with {n} extra bytes"))),
        };
        Ok(Self { rounds, delta })
    }
}
