//! Closed-form fusion of the generalist prior with the specialist's private
//! information gain, and the exact single-step law of the protocol.
//!
//! Products and ratios are formed in log space; probabilities only reappear
//! when a result is normalized.

use crate::dist::{log_sum_exp, softmax, Distribution, LogitVector, PROB_FLOOR};
use crate::error::{Error, Result};

fn same_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::VocabMismatch { expected, got })
    }
}

fn clamped_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Pointwise mutual information r(y) = log P⁺(y) − log P⁻(y).
pub fn pmi_reward(p_plus: &Distribution, p_minus: &Distribution) -> Result<Vec<f64>> {
    same_len(p_plus.len(), p_minus.len())?;
    Ok(p_plus
        .probs()
        .iter()
        .zip(p_minus.probs())
        .map(|(&a, &b)| clamped_ln(a) - clamped_ln(b))
        .collect())
}

/// The fused target P* ∝ P_LLM · exp(r) together with its normalizer.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedTarget {
    pub target: Distribution,
    /// Z = Σ_y P_LLM(y)·exp(r(y)).
    pub partition: f64,
    pub reward: Vec<f64>,
}

pub fn fused_target(
    p_llm: &Distribution,
    p_plus: &Distribution,
    p_minus: &Distribution,
) -> Result<FusedTarget> {
    same_len(p_llm.len(), p_plus.len())?;
    let reward = pmi_reward(p_plus, p_minus)?;
    let log_unnorm: Vec<f64> = p_llm
        .probs()
        .iter()
        .zip(&reward)
        .map(|(&p, r)| clamped_ln(p) + r)
        .collect();
    let log_z = log_sum_exp(&log_unnorm);
    if !log_z.is_finite() {
        return Err(Error::Degenerate("fused mass is not finite".into()));
    }
    let weights: Vec<f64> = log_unnorm.iter().map(|l| (l - log_z).exp()).collect();
    Ok(FusedTarget {
        target: Distribution::from_weights(weights)?,
        partition: log_z.exp(),
        reward,
    })
}

/// Ratio-based acceptance min(1, P_LLM(y) / (λ·P⁻(y))). Never reads P⁺.
pub fn acceptance_probability(p_llm: f64, p_minus: f64, threshold: f64) -> f64 {
    let log_ratio = clamped_ln(p_llm) - threshold.ln() - clamped_ln(p_minus);
    log_ratio.min(0.0).exp()
}

pub fn acceptance_vector(
    p_llm: &Distribution,
    p_minus: &Distribution,
    threshold: f64,
) -> Result<Vec<f64>> {
    same_len(p_llm.len(), p_minus.len())?;
    check_threshold(threshold)?;
    Ok(p_llm
        .probs()
        .iter()
        .zip(p_minus.probs())
        .map(|(&a, &b)| acceptance_probability(a, b, threshold))
        .collect())
}

fn check_threshold(threshold: f64) -> Result<()> {
    if threshold.is_finite() && threshold > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "threshold must be > 0, got {threshold}"
        )))
    }
}

/// Steering recovery over the full vocabulary: softmax(h_LLM + β·(h⁺ − h⁻)).
pub fn recovery_distribution(
    h_llm: &LogitVector,
    h_plus: &LogitVector,
    h_minus: &LogitVector,
    beta: f64,
) -> Result<Distribution> {
    same_len(h_llm.len(), h_plus.len())?;
    same_len(h_llm.len(), h_minus.len())?;
    let rec: Vec<f64> = h_llm
        .values()
        .iter()
        .zip(h_plus.values())
        .zip(h_minus.values())
        .map(|((l, p), m)| l + beta * (p - m))
        .collect();
    Ok(softmax(&LogitVector::new(rec)?))
}

/// Exact law of one protocol step, obtained by enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolLaw {
    /// α(y) for every candidate draft y.
    pub acceptance: Vec<f64>,
    /// Σ_y Q(y)·(1 − α(y)).
    pub rejection_mass: f64,
    pub recovery: Distribution,
    /// P_out(y) = Q(y)·α(y) + rejection_mass·P_rec(y).
    pub output: Distribution,
}

/// The drafter proposal Q is `p_plus`; its logits enter only through recovery.
#[allow(clippy::too_many_arguments)]
pub fn one_step_protocol_law(
    p_llm: &Distribution,
    p_plus: &Distribution,
    p_minus: &Distribution,
    h_llm: &LogitVector,
    h_plus: &LogitVector,
    h_minus: &LogitVector,
    threshold: f64,
    beta: f64,
) -> Result<ProtocolLaw> {
    same_len(p_llm.len(), p_plus.len())?;
    if !(beta.is_finite() && beta >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "beta must be >= 0, got {beta}"
        )));
    }
    let acceptance = acceptance_vector(p_llm, p_minus, threshold)?;
    let recovery = recovery_distribution(h_llm, h_plus, h_minus, beta)?;
    let q = p_plus.probs();
    let rejection_mass: f64 = q
        .iter()
        .zip(&acceptance)
        .map(|(qy, a)| qy * (1.0 - a))
        .sum();
    let out: Vec<f64> = q
        .iter()
        .zip(&acceptance)
        .zip(recovery.probs())
        .map(|((qy, a), r)| qy * a + rejection_mass * r)
        .collect();
    Ok(ProtocolLaw {
        acceptance,
        rejection_mass,
        recovery,
        output: Distribution::from_probs(out)?,
    })
}

/// Convenience wrapper deriving every input from three logit vectors.
pub fn one_step_law_from_logits(
    h_llm: &LogitVector,
    h_plus: &LogitVector,
    h_minus: &LogitVector,
    threshold: f64,
    beta: f64,
) -> Result<ProtocolLaw> {
    one_step_protocol_law(
        &softmax(h_llm),
        &softmax(h_plus),
        &softmax(h_minus),
        h_llm,
        h_plus,
        h_minus,
        threshold,
        beta,
    )
}
