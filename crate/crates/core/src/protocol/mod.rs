//! Draft → verify → recover rounds between a private drafter (edge) and a
//! generalist verifier (cloud).
//!
//! [`EdgeNode`] and [`CloudNode`] hold each side's state; [`Session`] drives
//! both in one process. The transport layer drives the same nodes over frames,
//! so every backend commits the same tokens for the same seed.

mod cloud;
mod edge;
mod session;
mod verify;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::vocab::TokenId;

pub use cloud::{CloudNode, CloudSettings, Scores};
pub use edge::{EdgeNode, RoundOutcome};
pub use session::{run_session, Session, SessionModels, SessionOutput};
pub use verify::{
    recover, recovery_law, verify, verify_with_thresholds, VerifyOutcome, VerifyParams,
};

/// Token ids proposed by the drafter for one round. Nothing else crosses up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DraftBatch {
    pub seq_no: u32,
    pub token_ids: Vec<TokenId>,
}

impl DraftBatch {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteeringEntry {
    pub token: TokenId,
    pub value: f32,
}

/// Top-k entries of h_LLM − β·h⁻ at the rejected position, highest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSteeringPayload {
    pub entries: Vec<SteeringEntry>,
}

impl SparseSteeringPayload {
    pub fn from_logits(
        h_llm: &crate::dist::LogitVector,
        h_minus: &crate::dist::LogitVector,
        beta: f64,
        top_k: usize,
    ) -> Result<Self> {
        if h_llm.len() != h_minus.len() {
            return Err(Error::VocabMismatch {
                expected: h_llm.len(),
                got: h_minus.len(),
            });
        }
        if top_k == 0 {
            return Err(Error::InvalidConfig("top_k must be positive".into()));
        }
        let mut entries: Vec<SteeringEntry> = h_llm
            .values()
            .iter()
            .zip(h_minus.values())
            .enumerate()
            .map(|(i, (l, m))| SteeringEntry {
                token: i as TokenId,
                value: (l - beta * m) as f32,
            })
            .collect();
        entries.sort_by(|a, b| b.value.total_cmp(&a.value).then(a.token.cmp(&b.token)));
        entries.truncate(top_k.min(h_llm.len()));
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Non-empty, finite, unique in-vocabulary ids, sorted by descending value.
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Protocol("empty steering payload".into()));
        }
        let mut seen = std::collections::HashSet::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            if e.token as usize >= vocab_size {
                return Err(Error::UnknownTokenId {
                    id: e.token,
                    vocab: vocab_size,
                });
            }
            if !e.value.is_finite() {
                return Err(Error::Protocol(format!("non-finite steering value at {i}")));
            }
            if !seen.insert(e.token) {
                return Err(Error::Protocol(format!(
                    "duplicate steering token {}",
                    e.token
                )));
            }
            if i > 0 && self.entries[i - 1].value < e.value {
                return Err(Error::Protocol("steering entries not sorted".into()));
            }
        }
        Ok(())
    }
}

/// Cloud's answer to one draft batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub seq_no: u32,
    pub accepted_count: usize,
    /// Present iff a drafted token was rejected, at position `accepted_count`.
    pub recovery: Option<SparseSteeringPayload>,
}

impl Verdict {
    pub fn check_against(&self, batch: &DraftBatch) -> Result<()> {
        if self.seq_no != batch.seq_no {
            return Err(Error::Protocol(format!(
                "verdict for round {} but round {} is outstanding",
                self.seq_no, batch.seq_no
            )));
        }
        let k = batch.len();
        match (&self.recovery, self.accepted_count) {
            (None, a) if a == k => Ok(()),
            (Some(_), a) if a < k => Ok(()),
            _ => Err(Error::Protocol(format!(
                "accepted {} of {} with recovery {}",
                self.accepted_count,
                k,
                if self.recovery.is_some() {
                    "present"
                } else {
                    "absent"
                }
            ))),
        }
    }
}

/// Everything observed in one round.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTrace {
    pub round: u32,
    pub drafted: Vec<TokenId>,
    /// α at each examined position. Empty where only the edge's view is known.
    pub alphas: Vec<f64>,
    pub accepted_count: usize,
    pub recovery_token: Option<TokenId>,
    pub uplink_bytes: u64,
    pub downlink_bytes: u64,
    /// Modeled round duration; zero until a latency model stamps it.
    pub clock_ms: f64,
}

impl RoundTrace {
    /// Tokens committed in this round.
    pub fn emitted(&self) -> usize {
        self.accepted_count + usize::from(self.recovery_token.is_some())
    }

    pub fn rejected(&self) -> bool {
        self.recovery_token.is_some()
    }
}
