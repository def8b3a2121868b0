//! Acceptance statistics, modeled latency and FLOPs, and report files.

mod cost;
mod latency;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::protocol::RoundTrace;

pub use cost::{token_flops, CostModel, Scenario};
pub use latency::{Baseline, LatencyModel};

pub const CSV_HEADER: [&str; 7] = [
    "round",
    "alpha",
    "accepted",
    "drafted",
    "uplink_bytes",
    "downlink_bytes",
    "clock_ms",
];

/// Accepted over drafted tokens.
pub fn acceptance_rate(traces: &[RoundTrace]) -> Result<f64> {
    let drafted: usize = traces.iter().map(|t| t.drafted.len()).sum();
    if drafted == 0 {
        return Err(Error::Degenerate("no drafted tokens".into()));
    }
    let accepted: usize = traces.iter().map(|t| t.accepted_count).sum();
    Ok(accepted as f64 / drafted as f64)
}

/// Mean acceptance probability α_t over every examined position.
pub fn mean_alpha(traces: &[RoundTrace]) -> Result<f64> {
    let (sum, n) = traces
        .iter()
        .flat_map(|t| &t.alphas)
        .fold((0.0, 0usize), |(s, n), a| (s + a, n + 1));
    if n == 0 {
        return Err(Error::Degenerate("no examined positions".into()));
    }
    Ok(sum / n as f64)
}

pub fn payload_totals(traces: &[RoundTrace]) -> (u64, u64) {
    traces.iter().fold((0, 0), |(u, d), t| {
        (u + t.uplink_bytes, d + t.downlink_bytes)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub config_hash: String,
    pub alpha_mean: Option<f64>,
    pub acceptance_rate: Option<f64>,
    pub speedup: Option<f64>,
    pub flops_llm_rag: Option<f64>,
    pub flops_specsteer: Option<f64>,
    /// Includes handshake and closing frames when the run went over a link.
    pub payload_up: u64,
    pub payload_down: u64,
    pub rounds: usize,
    pub generated_tokens: usize,
    pub modeled_ms: f64,
}

impl Summary {
    /// `context` is the private context length used for the FLOPs scenarios.
    pub fn from_traces(
        config_hash: &str,
        traces: &[RoundTrace],
        latency: &LatencyModel,
        cost: &CostModel,
        context: usize,
    ) -> Self {
        let (payload_up, payload_down) = payload_totals(traces);
        let rate = acceptance_rate(traces).ok();
        Self {
            config_hash: config_hash.to_string(),
            alpha_mean: mean_alpha(traces).ok(),
            acceptance_rate: rate,
            speedup: latency.speedup(traces, Baseline::LlmAutoregressive).ok(),
            flops_llm_rag: cost.flops_total(Scenario::LlmRag { context }).ok(),
            flops_specsteer: rate.and_then(|alpha| {
                cost.flops_total(Scenario::SpecSteer { context, alpha })
                    .ok()
            }),
            payload_up,
            payload_down,
            rounds: traces.len(),
            generated_tokens: traces.iter().map(RoundTrace::emitted).sum(),
            modeled_ms: latency.session_ms(traces),
        }
    }
}

/// One row per round; `alpha` is the round's mean α, blank when unknown.
pub fn write_trace_csv<W: Write>(out: W, config_hash: &str, traces: &[RoundTrace]) -> Result<()> {
    let mut out = out;
    writeln!(out, "# config_hash={config_hash}")?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for t in traces {
        let alpha = if t.alphas.is_empty() {
            String::new()
        } else {
            (t.alphas.iter().sum::<f64>() / t.alphas.len() as f64).to_string()
        };
        w.write_record([
            t.round.to_string(),
            alpha,
            t.accepted_count.to_string(),
            t.drafted.len().to_string(),
            t.uplink_bytes.to_string(),
            t.downlink_bytes.to_string(),
            t.clock_ms.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write>(mut out: W, summary: &Summary) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, summary).map_err(|e| Error::Io(e.into()))?;
    writeln!(out)?;
    Ok(())
}

pub fn write_reports(
    dir: &Path,
    stem: &str,
    summary: &Summary,
    traces: &[RoundTrace],
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let csv = std::fs::File::create(dir.join(format!("{stem}_trace.csv")))?;
    write_trace_csv(std::io::BufWriter::new(csv), &summary.config_hash, traces)?;
    let json = std::fs::File::create(dir.join(format!("{stem}_summary.json")))?;
    write_summary_json(std::io::BufWriter::new(json), summary)
}
