use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::RoundTrace;
use crate::transport::wire::HEADER_LEN;
use crate::transport::ChannelModel;

/// Simulated compute costs in milliseconds plus the link they run over.
///
/// Defaults put the generalist at 53× the drafter's per-token cost (a 32B vs
/// 0.6B parameter ratio). A verify pass scores a whole batch in parallel for
/// the price of one generalist step. Recovery, charged once per rejecting
/// round, covers building and applying the steering payload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyModel {
    pub draft_ms_per_token: f64,
    pub llm_ms_per_token: f64,
    pub verify_ms_per_batch: f64,
    pub recovery_ms: f64,
    #[serde(skip)]
    pub channel: ChannelModel,
}

impl Default for LatencyModel {
    fn default() -> Self {
        Self {
            draft_ms_per_token: 1.0,
            llm_ms_per_token: 53.0,
            verify_ms_per_batch: 53.0,
            recovery_ms: 21.2,
            channel: ChannelModel::ideal(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    LlmAutoregressive,
    SlmAutoregressive,
}

impl LatencyModel {
    pub fn with_channel(mut self, channel: ChannelModel) -> Self {
        self.channel = channel;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("draft_ms_per_token", self.draft_ms_per_token),
            ("llm_ms_per_token", self.llm_ms_per_token),
            ("verify_ms_per_batch", self.verify_ms_per_batch),
            ("recovery_ms", self.recovery_ms),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        self.channel.validate()
    }

    /// Modeled duration of one round: compute plus a request and a response
    /// crossing the link.
    pub fn round_ms(&self, t: &RoundTrace) -> f64 {
        let compute = t.drafted.len() as f64 * self.draft_ms_per_token
            + self.verify_ms_per_batch
            + if t.rejected() { self.recovery_ms } else { 0.0 };
        compute
            + self.channel.delivery_ms(t.uplink_bytes as usize)
            + self.channel.delivery_ms(t.downlink_bytes as usize)
    }

    /// Writes each round's modeled duration into `clock_ms`.
    pub fn stamp(&self, traces: &mut [RoundTrace]) {
        for t in traces {
            t.clock_ms = self.round_ms(t);
        }
    }

    pub fn session_ms(&self, traces: &[RoundTrace]) -> f64 {
        traces.iter().map(|t| self.round_ms(t)).sum()
    }

    pub fn baseline_ms(&self, tokens: usize, baseline: Baseline) -> f64 {
        let per = match baseline {
            Baseline::LlmAutoregressive => self.llm_ms_per_token,
            Baseline::SlmAutoregressive => self.draft_ms_per_token,
        };
        tokens as f64 * per
    }

    /// Baseline time for the same output length over protocol time.
    pub fn speedup(&self, traces: &[RoundTrace], baseline: Baseline) -> Result<f64> {
        let tokens: usize = traces.iter().map(RoundTrace::emitted).sum();
        if tokens == 0 {
            return Err(Error::Degenerate("no tokens generated".into()));
        }
        let protocol = self.session_ms(traces);
        if protocol <= 0.0 {
            return Err(Error::Degenerate("protocol time is zero".into()));
        }
        Ok(self.baseline_ms(tokens, baseline) / protocol)
    }

    /// Expected speedup over the generalist when each drafted token is
    /// accepted independently with probability `alpha`, K tokens per round,
    /// and a rejection costs one recovery.
    ///
    /// A round emits (1 − α^K)/(1 − α) tokens on average and ends in a
    /// rejection with probability 1 − α^K.
    pub fn expected_speedup(&self, alpha: f64, k: usize, top_k: usize) -> Result<f64> {
        if !(0.0..=1.0).contains(&alpha) || k == 0 {
            return Err(Error::InvalidConfig(format!("alpha {alpha}, k {k}")));
        }
        let all = alpha.powi(k as i32);
        let reject = 1.0 - all;
        let tokens = if alpha == 1.0 {
            k as f64
        } else {
            reject / (1.0 - alpha)
        };
        let up = (HEADER_LEN + 6 + 4 * k) as f64 + 4.0 * reject;
        let down = (HEADER_LEN + 7) as f64 + reject * (2 + 8 * top_k) as f64;
        let link = 2.0 * self.channel.one_way_latency_ms
            + (up + down) / self.channel.bandwidth_bytes_per_s * 1000.0;
        let round = k as f64 * self.draft_ms_per_token
            + self.verify_ms_per_batch
            + reject * self.recovery_ms
            + link;
        Ok(tokens * self.llm_ms_per_token / round)
    }
}
