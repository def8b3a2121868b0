use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{ModelProfile, ModelRole};

/// Abstract FLOPs to run one token through `profile` at sequence length
/// `seq_len`: 2N for the weights plus 4·layers·hidden·seq_len for attention.
pub fn token_flops(profile: &ModelProfile, seq_len: usize) -> f64 {
    2.0 * profile.n_params as f64
        + 4.0 * profile.layers as f64 * profile.hidden_dim as f64 * seq_len as f64
}

/// Σ_{s=from+1}^{to} token_flops(s), in closed form.
fn span_flops(profile: &ModelProfile, from: usize, to: usize) -> f64 {
    if to <= from {
        return 0.0;
    }
    let n = (to - from) as f64;
    let sum_s = (from + 1 + to) as f64 * n / 2.0;
    2.0 * profile.n_params as f64 * n
        + 4.0 * profile.layers as f64 * profile.hidden_dim as f64 * sum_s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    /// The generalist reads the private context in its prompt.
    LlmRag { context: usize },
    /// The private context stays on the edge; the cloud scores drafts over
    /// the public history only.
    SpecSteer { context: usize, alpha: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CostModel {
    pub llm: ModelProfile,
    pub slm: ModelProfile,
    /// Public prompt length, shared by both scenarios.
    pub prompt_tokens: usize,
    pub gen_tokens: usize,
    pub horizon_k: usize,
    pub llm_scale: f64,
    pub slm_scale: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        Self {
            llm: ModelProfile::new(
                "generalist-32b",
                ModelRole::Generalist,
                32_000_000_000,
                64,
                5120,
            ),
            slm: ModelProfile::new(
                "specialist-0.6b",
                ModelRole::SpecialistPrivate,
                600_000_000,
                28,
                1024,
            ),
            prompt_tokens: 32,
            gen_tokens: 100,
            horizon_k: 4,
            llm_scale: 1.0,
            slm_scale: 1.0,
        }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.llm_scale > 0.0
            && self.slm_scale > 0.0
            && self.llm_scale.is_finite()
            && self.slm_scale.is_finite())
        {
            return Err(Error::InvalidConfig("cost scales must be positive".into()));
        }
        if self.gen_tokens == 0 || self.horizon_k == 0 {
            return Err(Error::InvalidConfig(
                "gen_tokens and horizon_k must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Expected rounds to emit `gen_tokens`: each round yields K·α accepted
    /// tokens plus one recovery token.
    pub fn rounds(&self, alpha: f64) -> f64 {
        self.gen_tokens as f64 / (self.horizon_k as f64 * alpha + 1.0)
    }

    /// Total FLOPs to generate `gen_tokens` new tokens.
    ///
    /// `LlmRag` prefills prompt + context, then decodes at growing length.
    /// `SpecSteer` charges, per drafted token, the drafter with attention over
    /// the private context (held in its KV cache, built once per user and not
    /// charged per query), and the generalist plus the generic drafter scoring
    /// over the public history.
    pub fn flops_total(&self, scenario: Scenario) -> Result<f64> {
        self.validate()?;
        let (p0, g) = (self.prompt_tokens, self.gen_tokens);
        match scenario {
            Scenario::LlmRag { context } => {
                if context == 0 {
                    return Err(Error::InvalidConfig(
                        "context length must be positive".into(),
                    ));
                }
                let prefill = span_flops(&self.llm, 0, p0 + context);
                let decode = span_flops(&self.llm, p0 + context, p0 + context + g);
                Ok(self.llm_scale * (prefill + decode))
            }
            Scenario::SpecSteer { context, alpha } => {
                if context == 0 {
                    return Err(Error::InvalidConfig(
                        "context length must be positive".into(),
                    ));
                }
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "alpha must be in (0, 1], got {alpha}"
                    )));
                }
                let drafted = self.rounds(alpha) * self.horizon_k as f64;
                let mid = g / 2;
                let draft = drafted * token_flops(&self.slm, p0 + context + mid);
                let cloud = drafted
                    * (self.llm_scale * token_flops(&self.llm, p0 + mid)
                        + self.slm_scale * token_flops(&self.slm, p0 + mid));
                Ok(self.slm_scale * draft + cloud)
            }
        }
    }
}
