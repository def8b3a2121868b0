use std::sync::Arc;

use crate::config::{DecodeMode, ProtocolConfig};
use crate::dist::LogitVector;
use crate::error::{Error, Result};
use crate::models::{check_shared_vocab, TokenModel};
use crate::protocol::{verify_with_thresholds, DraftBatch, VerifyOutcome, VerifyParams};
use crate::rng::{Purpose, SessionRng};
use crate::vocab::TokenId;

/// The subset of the protocol configuration the cloud is told about.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudSettings {
    pub lambda: f64,
    pub beta: f64,
    pub horizon_k: usize,
    pub top_k: usize,
    pub max_len: usize,
    pub mode: DecodeMode,
    pub seed: u64,
}

impl From<&ProtocolConfig> for CloudSettings {
    fn from(c: &ProtocolConfig) -> Self {
        Self {
            lambda: c.lambda,
            beta: c.beta,
            horizon_k: c.horizon_k,
            top_k: c.top_k,
            max_len: c.max_len,
            mode: c.mode,
            seed: c.seed,
        }
    }
}

/// Logits of the generalist and the generic specialist at each drafted position.
#[derive(Debug, Clone)]
pub struct Scores {
    pub llm: Vec<LogitVector>,
    pub minus: Vec<LogitVector>,
}

/// Holds the generalist and the generic specialist. Sees only token ids.
pub struct CloudNode {
    generalist: Arc<dyn TokenModel>,
    generic: Arc<dyn TokenModel>,
    settings: CloudSettings,
    rng: SessionRng,
    vocab_size: usize,
    eos_id: TokenId,
    mirror: Vec<TokenId>,
    prompt_len: usize,
    next_seq: u32,
    awaiting_delta: bool,
    finished: bool,
}

impl CloudNode {
    pub fn new(
        generalist: Arc<dyn TokenModel>,
        generic: Arc<dyn TokenModel>,
        settings: CloudSettings,
        prompt: &[TokenId],
        eos_id: TokenId,
    ) -> Result<Self> {
        let vocab_size = check_shared_vocab(&[generalist.as_ref(), generic.as_ref()])?;
        let probe = ProtocolConfig {
            lambda: settings.lambda,
            beta: settings.beta,
            horizon_k: settings.horizon_k,
            top_k: settings.top_k,
            max_len: settings.max_len,
            mode: settings.mode,
            seed: settings.seed,
            ..ProtocolConfig::default()
        };
        probe.validate(vocab_size)?;
        if let Some(&id) = prompt
            .iter()
            .chain(Some(&eos_id))
            .find(|&&id| id as usize >= vocab_size)
        {
            return Err(Error::UnknownTokenId {
                id,
                vocab: vocab_size,
            });
        }
        Ok(Self {
            generalist,
            generic,
            rng: SessionRng::new(settings.seed),
            settings,
            vocab_size,
            eos_id,
            mirror: prompt.to_vec(),
            prompt_len: prompt.len(),
            next_seq: 0,
            awaiting_delta: false,
            finished: false,
        })
    }

    pub fn settings(&self) -> &CloudSettings {
        &self.settings
    }

    /// The cloud's copy of the committed sequence.
    pub fn mirror(&self) -> &[TokenId] {
        &self.mirror
    }

    pub fn generated(&self) -> &[TokenId] {
        &self.mirror[self.prompt_len..]
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn next_seq(&self) -> u32 {
        self.next_seq
    }

    /// Applies the edge's delta and checks the batch against the mirror, then
    /// scores every drafted position with both cloud models.
    pub fn begin_round(&mut self, batch: &DraftBatch, delta: Option<TokenId>) -> Result<Scores> {
        if self.finished {
            return Err(Error::Terminated);
        }
        if batch.seq_no != self.next_seq {
            return Err(Error::Protocol(format!(
                "expected draft {} but got {}",
                self.next_seq, batch.seq_no
            )));
        }
        self.apply_delta(delta)?;
        self.check_batch(batch)?;
        let mut ctx = self.mirror.clone();
        let mut scores = Scores {
            llm: Vec::with_capacity(batch.len()),
            minus: Vec::with_capacity(batch.len()),
        };
        for &y in &batch.token_ids {
            scores.llm.push(self.generalist.next_token_logits(&ctx)?);
            scores.minus.push(self.generic.next_token_logits(&ctx)?);
            ctx.push(y);
        }
        Ok(scores)
    }

    /// Runs acceptance tests with one threshold per position and commits the
    /// accepted prefix to the mirror.
    pub fn complete_round(
        &mut self,
        batch: &DraftBatch,
        scores: &Scores,
        thresholds: &[f64],
    ) -> Result<VerifyOutcome> {
        let params = VerifyParams {
            beta: self.settings.beta,
            top_k: self.settings.top_k,
            mode: self.settings.mode,
        };
        let mut rng = self.rng.stream(batch.seq_no, Purpose::Verify);
        let out = verify_with_thresholds(
            batch,
            &scores.llm,
            &scores.minus,
            thresholds,
            &params,
            &mut rng,
        )?;
        self.mirror
            .extend_from_slice(&batch.token_ids[..out.verdict.accepted_count]);
        self.awaiting_delta = out.verdict.recovery.is_some();
        self.next_seq += 1;
        Ok(out)
    }

    /// One full round at the configured λ.
    pub fn handle_draft(
        &mut self,
        batch: &DraftBatch,
        delta: Option<TokenId>,
    ) -> Result<VerifyOutcome> {
        let scores = self.begin_round(batch, delta)?;
        let thresholds = vec![self.settings.lambda; batch.len()];
        self.complete_round(batch, &scores, &thresholds)
    }

    /// Ends the session. `rounds` is the number of rounds the edge completed.
    pub fn finish(&mut self, rounds: u32, delta: Option<TokenId>) -> Result<()> {
        if self.finished {
            return Err(Error::Terminated);
        }
        if rounds != self.next_seq {
            return Err(Error::Protocol(format!(
                "edge finished after {rounds} rounds, cloud saw {}",
                self.next_seq
            )));
        }
        self.apply_delta(delta)?;
        self.finished = true;
        Ok(())
    }

    fn apply_delta(&mut self, delta: Option<TokenId>) -> Result<()> {
        match (self.awaiting_delta, delta) {
            (true, Some(id)) => {
                if id as usize >= self.vocab_size {
                    return Err(Error::UnknownTokenId {
                        id,
                        vocab: self.vocab_size,
                    });
                }
                self.check_open(1)?;
                self.mirror.push(id);
                self.awaiting_delta = false;
                Ok(())
            }
            (false, None) => Ok(()),
            (true, None) => Err(Error::Protocol(
                "missing recovery token from previous round".into(),
            )),
            (false, Some(_)) => Err(Error::Protocol("unexpected history delta".into())),
        }
    }

    fn check_open(&self, adding: usize) -> Result<()> {
        if self.mirror.last() == Some(&self.eos_id) && self.mirror.len() > self.prompt_len {
            return Err(Error::Protocol("sequence already ended".into()));
        }
        if self.generated().len() + adding > self.settings.max_len {
            return Err(Error::Protocol("length cap exceeded".into()));
        }
        Ok(())
    }

    fn check_batch(&self, batch: &DraftBatch) -> Result<()> {
        if batch.is_empty() || batch.len() > self.settings.horizon_k {
            return Err(Error::Protocol(format!(
                "draft of {} tokens with K = {}",
                batch.len(),
                self.settings.horizon_k
            )));
        }
        if let Some(&id) = batch
            .token_ids
            .iter()
            .find(|&&id| id as usize >= self.vocab_size)
        {
            return Err(Error::UnknownTokenId {
                id,
                vocab: self.vocab_size,
            });
        }
        if batch.token_ids[..batch.len() - 1].contains(&self.eos_id) {
            return Err(Error::Protocol(
                "draft continues past end-of-sequence".into(),
            ));
        }
        self.check_open(batch.len())
    }
}
