use std::sync::Arc;

use crate::config::ProtocolConfig;
use crate::dist::{sample, softmax, LogitVector};
use crate::error::{Error, Result};
use crate::models::TokenModel;
use crate::protocol::{recover, DraftBatch, Verdict};
use crate::rng::{Purpose, SessionRng};
use crate::vocab::{TokenId, TokenSequence, Vocabulary};

/// What a verdict did to the edge's history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RoundOutcome {
    pub accepted: usize,
    pub recovered: Option<TokenId>,
    pub finished: bool,
}

struct PendingDraft {
    batch: DraftBatch,
    logits: Vec<LogitVector>,
}

/// Holds the private drafter. Sends token ids, receives verdicts.
pub struct EdgeNode {
    drafter: Arc<dyn TokenModel>,
    config: ProtocolConfig,
    rng: SessionRng,
    history: TokenSequence,
    prompt_len: usize,
    eos_id: TokenId,
    round: u32,
    pending: Option<PendingDraft>,
    delta: Option<TokenId>,
}

impl EdgeNode {
    pub fn new(
        drafter: Arc<dyn TokenModel>,
        config: &ProtocolConfig,
        prompt: &[TokenId],
        vocab: &Vocabulary,
    ) -> Result<Self> {
        config.validate(vocab.size())?;
        if drafter.vocab_size() != vocab.size() {
            return Err(Error::VocabMismatch {
                expected: vocab.size(),
                got: drafter.vocab_size(),
            });
        }
        let history = TokenSequence::new(prompt.to_vec(), prompt.len() + config.max_len, vocab)?;
        Ok(Self {
            drafter,
            config: config.clone(),
            rng: SessionRng::new(config.seed),
            history,
            prompt_len: prompt.len(),
            eos_id: vocab.eos_id(),
            round: 0,
            pending: None,
            delta: None,
        })
    }

    pub fn config(&self) -> &ProtocolConfig {
        &self.config
    }

    /// Prompt plus every committed token.
    pub fn history(&self) -> &[TokenId] {
        self.history.ids()
    }

    pub fn prompt_len(&self) -> usize {
        self.prompt_len
    }

    pub fn generated(&self) -> &[TokenId] {
        &self.history.ids()[self.prompt_len..]
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn is_finished(&self) -> bool {
        self.history.is_closed() || self.generated().len() >= self.config.max_len
    }

    pub fn outstanding(&self) -> Option<&DraftBatch> {
        self.pending.as_ref().map(|p| &p.batch)
    }

    /// Drafter logits for each position of the outstanding batch.
    pub fn pending_logits(&self) -> Option<&[LogitVector]> {
        self.pending.as_ref().map(|p| p.logits.as_slice())
    }

    /// Samples up to K tokens autoregressively, stopping early at EOS or the
    /// length cap.
    pub fn draft(&mut self) -> Result<DraftBatch> {
        if self.is_finished() {
            return Err(Error::Terminated);
        }
        if self.pending.is_some() {
            return Err(Error::Protocol("a draft is already outstanding".into()));
        }
        let budget = self
            .config
            .horizon_k
            .min(self.config.max_len - self.generated().len());
        let mut rng = self.rng.stream(self.round, Purpose::Draft);
        let mut ctx = self.history.ids().to_vec();
        let mut token_ids = Vec::with_capacity(budget);
        let mut logits = Vec::with_capacity(budget);
        let eos = self.eos_id;
        while token_ids.len() < budget {
            let h = self.drafter.next_token_logits(&ctx)?;
            let y = sample(&softmax(&h), &mut rng, self.config.mode);
            logits.push(h);
            token_ids.push(y);
            ctx.push(y);
            if y == eos {
                break;
            }
        }
        let batch = DraftBatch {
            seq_no: self.round,
            token_ids,
        };
        self.pending = Some(PendingDraft {
            batch: batch.clone(),
            logits,
        });
        Ok(batch)
    }

    /// The recovery token committed in the last round, to be mirrored by the
    /// cloud. Taking it clears it.
    pub fn take_history_delta(&mut self) -> Option<TokenId> {
        self.delta.take()
    }

    pub fn pending_delta(&self) -> Option<TokenId> {
        self.delta
    }

    /// Commits the accepted prefix and, on rejection, samples the recovery
    /// token locally from the steering payload and the drafter's own logits.
    pub fn apply_verdict(&mut self, verdict: &Verdict) -> Result<RoundOutcome> {
        let pending = self
            .pending
            .take()
            .ok_or_else(|| Error::Protocol("verdict without an outstanding draft".into()))?;
        if let Err(e) = verdict.check_against(&pending.batch) {
            self.pending = Some(pending);
            return Err(e);
        }
        let a = verdict.accepted_count;
        let recovered = match &verdict.recovery {
            Some(payload) => {
                payload.validate(self.drafter.vocab_size())?;
                let mut rng = self.rng.stream(self.round, Purpose::Recover);
                Some(recover(
                    payload,
                    &pending.logits[a],
                    self.config.beta,
                    self.config.mode,
                    &mut rng,
                )?)
            }
            None => None,
        };
        for &y in &pending.batch.token_ids[..a] {
            self.history.push(y)?;
        }
        if let Some(y) = recovered {
            self.history.push(y)?;
            self.delta = Some(y);
        }
        self.round += 1;
        Ok(RoundOutcome {
            accepted: a,
            recovered,
            finished: self.is_finished(),
        })
    }
}
