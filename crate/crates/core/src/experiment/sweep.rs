use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dist::{kl_divergence, Distribution};
use crate::error::{Error, Result};
use crate::experiment::{empirical, ExperimentConfig, World};
use crate::fusion::fused_target;
use crate::metrics::{acceptance_rate, mean_alpha, payload_totals, Baseline};
use crate::protocol::{run_session, RoundTrace};
use crate::rng::SessionRng;
use crate::vocab::TokenId;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub lambda: f64,
    pub beta: f64,
    pub sessions: usize,
    pub alpha_mean: f64,
    pub acceptance_rate: f64,
    pub speedup: f64,
    pub payload_up: u64,
    pub payload_down: u64,
    /// KL(empirical first-token law ‖ fused target), averaged over probes.
    pub kl_first_token: f64,
}

/// Runs every (λ, β) cell, λ-major in input order.
///
/// Trial seeds depend only on (probe, trial), so all cells see the same
/// random numbers and differences between cells reflect λ and β alone.
pub fn run_sweep(cfg: &ExperimentConfig, world: &World) -> Result<Vec<SweepCell>> {
    let models = world.models()?;
    let prompts: Vec<&str> = if cfg.sweep.probe_prompts.is_empty() {
        vec![cfg.run.prompt.as_str()]
    } else {
        cfg.sweep.probe_prompts.iter().map(String::as_str).collect()
    };
    let probes = prompts
        .iter()
        .map(|p| world.encode_prompt(p))
        .collect::<Result<Vec<_>>>()?;
    let targets = probes
        .iter()
        .map(|h| {
            Ok(fused_target(
                &models.generalist.next_token_distribution(h)?,
                &models.specialist.next_token_distribution(h)?,
                &models.generic.next_token_distribution(h)?,
            )?
            .target)
        })
        .collect::<Result<Vec<Distribution>>>()?;

    let grid: Vec<(f64, f64)> = cfg
        .sweep
        .lambda_list
        .iter()
        .flat_map(|&l| cfg.sweep.beta_list.iter().map(move |&b| (l, b)))
        .collect();
    let root = SessionRng::new(cfg.protocol.seed);
    let trials = cfg.sweep.trials;
    let latency = cfg.latency_model();

    grid.par_iter()
        .map(|&(lambda, beta)| {
            let mut protocol = cfg.protocol.clone();
            protocol.lambda = lambda;
            protocol.beta = beta;
            protocol.max_len = cfg.sweep.max_len;
            let mut traces: Vec<RoundTrace> = Vec::new();
            let mut kl = 0.0;
            for (j, (probe, target)) in probes.iter().zip(&targets).enumerate() {
                let mut first: Vec<TokenId> = Vec::with_capacity(trials);
                for t in 0..trials {
                    protocol.seed = root.split((j * trials + t) as u64).seed();
                    let out = run_session(&protocol, &models, probe, &world.vocab)?;
                    first.push(out.generated()[0]);
                    traces.extend(out.traces);
                }
                let emp = empirical(&first, world.vocab.size())?;
                kl += kl_divergence(emp.probs(), target.probs());
            }
            let (payload_up, payload_down) = payload_totals(&traces);
            Ok(SweepCell {
                lambda,
                beta,
                sessions: trials * probes.len(),
                alpha_mean: mean_alpha(&traces)?,
                acceptance_rate: acceptance_rate(&traces)?,
                speedup: latency.speedup(&traces, Baseline::LlmAutoregressive)?,
                payload_up,
                payload_down,
                kl_first_token: kl / probes.len() as f64,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(mut out: W, config_hash: &str, cells: &[SweepCell]) -> Result<()> {
    writeln!(out, "# config_hash={config_hash}")?;
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(c)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}

/// A line chart of one metric against λ (in grid order), one line per β.
pub fn sweep_svg(
    cells: &[SweepCell],
    config_hash: &str,
    title: &str,
    metric: impl Fn(&SweepCell) -> f64,
) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 56.0;
    const COLORS: [&str; 6] = [
        "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
    ];

    let mut lambdas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    for c in cells {
        if !lambdas.contains(&c.lambda) {
            lambdas.push(c.lambda);
        }
        if !betas.contains(&c.beta) {
            betas.push(c.beta);
        }
    }
    let values: Vec<f64> = cells
        .iter()
        .map(&metric)
        .filter(|v| v.is_finite())
        .collect();
    let lo = values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .min(0.0);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        hi = lo + 1.0;
    }
    let x = |i: usize| {
        PAD + (W - 2.0 * PAD)
            * if lambdas.len() > 1 {
                i as f64 / (lambdas.len() - 1) as f64
            } else {
                0.5
            }
    };
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, "<!-- config_hash={config_hash} -->");
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{title}</text>"#,
        W / 2.0
    );
    let _ = writeln!(
        s,
        r#"<path d="M{PAD} {PAD} V{b} H{r}" stroke="black" fill="none"/>"#,
        b = H - PAD,
        r = W - PAD
    );
    for (i, l) in lambdas.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{l}</text>"#,
            x(i),
            H - PAD + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">lambda</text>"#,
        W / 2.0,
        H - 12.0
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3}</text>"#,
            PAD - 6.0,
            y(v) + 4.0
        );
    }
    for (bi, b) in betas.iter().enumerate() {
        let color = COLORS[bi % COLORS.len()];
        let points: Vec<String> = lambdas
            .iter()
            .enumerate()
            .filter_map(|(i, l)| {
                cells
                    .iter()
                    .find(|c| c.lambda == *l && c.beta == *b)
                    .map(&metric)
                    .filter(|v| v.is_finite())
                    .map(|v| format!("{:.1},{:.1}", x(i), y(v)))
            })
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let ly = PAD + 16.0 * bi as f64;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" fill="{color}">beta={b}</text>"#,
            W - PAD - 70.0
        );
    }
    s.push_str("</svg>\n");
    s
}
