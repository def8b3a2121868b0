use std::sync::Arc;

use crate::config::{ProtocolConfig, ThresholdMode};
use crate::dist::softmax;
use crate::error::{Error, Result};
use crate::fusion::fused_target;
use crate::models::{check_shared_vocab, TokenModel};
use crate::protocol::{CloudNode, CloudSettings, EdgeNode, RoundTrace};
use crate::transport::wire;
use crate::vocab::{TokenId, Vocabulary};

/// The three models of a session. `specialist` stays on the edge.
#[derive(Clone)]
pub struct SessionModels {
    pub generalist: Arc<dyn TokenModel>,
    pub specialist: Arc<dyn TokenModel>,
    pub generic: Arc<dyn TokenModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutput {
    /// Prompt followed by the generated tokens.
    pub sequence: Vec<TokenId>,
    pub prompt_len: usize,
    pub traces: Vec<RoundTrace>,
}

impl SessionOutput {
    pub fn generated(&self) -> &[TokenId] {
        &self.sequence[self.prompt_len..]
    }
}

/// Edge and cloud in one process, exchanging messages by value.
pub struct Session {
    edge: EdgeNode,
    cloud: CloudNode,
    threshold: ThresholdMode,
    traces: Vec<RoundTrace>,
}

impl Session {
    pub fn new(
        config: &ProtocolConfig,
        models: &SessionModels,
        prompt: &[TokenId],
        vocab: &Vocabulary,
    ) -> Result<Self> {
        check_shared_vocab(&[
            models.generalist.as_ref(),
            models.specialist.as_ref(),
            models.generic.as_ref(),
        ])?;
        let edge = EdgeNode::new(models.specialist.clone(), config, prompt, vocab)?;
        let cloud = CloudNode::new(
            models.generalist.clone(),
            models.generic.clone(),
            CloudSettings::from(config),
            prompt,
            vocab.eos_id(),
        )?;
        Ok(Self {
            edge,
            cloud,
            threshold: config.threshold,
            traces: Vec::new(),
        })
    }

    pub fn is_finished(&self) -> bool {
        self.edge.is_finished()
    }

    pub fn history(&self) -> &[TokenId] {
        self.edge.history()
    }

    pub fn traces(&self) -> &[RoundTrace] {
        &self.traces
    }

    /// Runs one draft → verify → recover round.
    pub fn step(&mut self) -> Result<&RoundTrace> {
        let delta = self.edge.take_history_delta();
        let batch = self.edge.draft()?;
        let scores = self.cloud.begin_round(&batch, delta)?;
        let thresholds = match self.threshold {
            ThresholdMode::Fixed => vec![self.cloud.settings().lambda; batch.len()],
            ThresholdMode::ExactPartition => {
                let plus = self.edge.pending_logits().expect("draft is outstanding");
                scores
                    .llm
                    .iter()
                    .zip(&scores.minus)
                    .zip(plus)
                    .map(|((l, m), p)| {
                        Ok(fused_target(&softmax(l), &softmax(p), &softmax(m))?.partition)
                    })
                    .collect::<Result<Vec<f64>>>()?
            }
        };
        let out = self.cloud.complete_round(&batch, &scores, &thresholds)?;
        let outcome = self.edge.apply_verdict(&out.verdict)?;
        self.traces.push(RoundTrace {
            round: batch.seq_no,
            uplink_bytes: wire::draft_frame_len(batch.len(), delta.is_some()) as u64,
            downlink_bytes: wire::verdict_frame_len(&out.verdict) as u64,
            drafted: batch.token_ids,
            alphas: out.alphas,
            accepted_count: outcome.accepted,
            recovery_token: outcome.recovered,
            clock_ms: 0.0,
        });
        Ok(self.traces.last().expect("just pushed"))
    }

    /// Closes the session on both sides and checks they agree.
    pub fn finish(mut self) -> Result<SessionOutput> {
        if !self.edge.is_finished() {
            return Err(Error::Protocol("session finished early".into()));
        }
        let delta = self.edge.take_history_delta();
        self.cloud.finish(self.edge.round(), delta)?;
        if self.cloud.mirror() != self.edge.history() {
            return Err(Error::Protocol(
                "cloud mirror diverged from edge history".into(),
            ));
        }
        Ok(SessionOutput {
            sequence: self.edge.history().to_vec(),
            prompt_len: self.edge.prompt_len(),
            traces: self.traces,
        })
    }
}

/// Generates until EOS or `config.max_len` new tokens.
pub fn run_session(
    config: &ProtocolConfig,
    models: &SessionModels,
    prompt: &[TokenId],
    vocab: &Vocabulary,
) -> Result<SessionOutput> {
    let mut session = Session::new(config, models, prompt, vocab)?;
    while !session.is_finished() {
        session.step()?;
    }
    session.finish()
}
