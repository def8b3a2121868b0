use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    #[default]
    Stochastic,
    Greedy,
}

impl DecodeMode {
    pub fn code(self) -> u8 {
        match self {
            DecodeMode::Stochastic => 0,
            DecodeMode::Greedy => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DecodeMode::Stochastic),
            1 => Some(DecodeMode::Greedy),
            _ => None,
        }
    }
}

impl FromStr for DecodeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stochastic" => Ok(DecodeMode::Stochastic),
            "greedy" => Ok(DecodeMode::Greedy),
            other => Err(Error::InvalidConfig(format!(
                "unknown decode mode {other:?}"
            ))),
        }
    }
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeMode::Stochastic => "stochastic",
            DecodeMode::Greedy => "greedy",
        })
    }
}

/// How the verification threshold is chosen at each position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// The configured scalar `lambda`.
    #[default]
    Fixed,
    /// The true per-position partition function. Needs the private drafter's
    /// distribution, so it only exists for in-process runs.
    ExactPartition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolConfig {
    pub lambda: f64,
    pub beta: f64,
    #[serde(rename = "k")]
    pub horizon_k: usize,
    pub top_k: usize,
    /// Cap on newly generated tokens.
    pub max_len: usize,
    pub mode: DecodeMode,
    pub seed: u64,
    pub threshold: ThresholdMode,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            beta: 1.0,
            horizon_k: 4,
            top_k: 32,
            max_len: 1024,
            mode: DecodeMode::Stochastic,
            seed: 0,
            threshold: ThresholdMode::Fixed,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self, vocab_size: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return bad(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("beta must be >= 0, got {}", self.beta));
        }
        if self.horizon_k == 0 || self.horizon_k > u16::MAX as usize {
            return bad(format!("k must be in 1..=65535, got {}", self.horizon_k));
        }
        if self.top_k == 0 || self.top_k > vocab_size || self.top_k > u16::MAX as usize {
            return bad(format!(
                "top_k must be in 1..={}, got {}",
                vocab_size.min(u16::MAX as usize),
                self.top_k
            ));
        }
        if self.max_len == 0 || self.max_len > u32::MAX as usize {
            return bad(format!("max_len must be positive, got {}", self.max_len));
        }
        Ok(())
    }
}
