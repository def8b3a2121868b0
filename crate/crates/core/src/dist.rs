//! Logit vectors, probability distributions, softmax and sampling.

use rand::Rng;

use crate::config::DecodeMode;
use crate::error::{Error, Result};
use crate::vocab::TokenId;

/// Smallest probability any model may report. Everything that enters a ratio
/// denominator is at least this large.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on Σp = 1 accepted when validating caller-supplied probabilities.
const SUM_TOLERANCE: f64 = 1e-6;

/// Pre-softmax scores over the vocabulary. All entries are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        if values.is_empty() {
            return Err(Error::InvalidDistribution("empty logit vector".into()));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, id: TokenId) -> f64 {
        self.0[id as usize]
    }

    /// Log-probability of `id` under softmax of these logits.
    pub fn log_prob(&self, id: TokenId) -> f64 {
        self.0[id as usize] - log_sum_exp(&self.0)
    }
}

/// A normalized distribution with every entry at least [`PROB_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution(Vec<f64>);

impl Distribution {
    /// Accepts probabilities that already sum to one (within 1e-6), renormalizes
    /// exactly and applies the floor.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        let sum = check_weights(&probs)?;
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {sum}"
            )));
        }
        Ok(Self::normalized(probs, sum))
    }

    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let sum = check_weights(&weights)?;
        Ok(Self::normalized(weights, sum))
    }

    pub fn uniform(size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidDistribution("empty distribution".into()));
        }
        Ok(Self(vec![1.0 / size as f64; size]))
    }

    fn normalized(mut probs: Vec<f64>, sum: f64) -> Self {
        if sum != 1.0 {
            probs.iter_mut().for_each(|p| *p /= sum);
        }
        apply_floor(&mut probs);
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, id: TokenId) -> f64 {
        self.0[id as usize]
    }

    pub fn log_probs(&self) -> LogitVector {
        LogitVector(self.0.iter().map(|p| p.ln()).collect())
    }

    pub fn argmax(&self) -> TokenId {
        argmax(&self.0) as TokenId
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, mode: DecodeMode) -> TokenId {
        sample(self, rng, mode)
    }
}

fn check_weights(w: &[f64]) -> Result<f64> {
    if w.is_empty() {
        return Err(Error::InvalidDistribution("empty distribution".into()));
    }
    if let Some(index) = w.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    if let Some(i) = w.iter().position(|&v| v < 0.0) {
        return Err(Error::InvalidDistribution(format!("negative mass at {i}")));
    }
    let sum: f64 = w.iter().sum();
    if sum <= 0.0 {
        return Err(Error::InvalidDistribution("zero total mass".into()));
    }
    Ok(sum)
}

/// Mixes in just enough uniform mass to lift every entry to the floor:
/// p' = (1 − Vε)·p + ε. Leaves the vector untouched when already floored.
fn apply_floor(p: &mut [f64]) {
    if p.iter().all(|&v| v >= PROB_FLOOR) {
        return;
    }
    let keep = 1.0 - p.len() as f64 * PROB_FLOOR;
    for v in p.iter_mut() {
        *v = keep * *v + PROB_FLOOR;
    }
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Max-subtracted softmax. Input is finite by construction of [`LogitVector`].
pub fn softmax(logits: &LogitVector) -> Distribution {
    let max = logits.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.0.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Distribution::normalized(exps, sum)
}

pub fn softmax_slice(values: &[f64]) -> Result<Distribution> {
    Ok(softmax(&LogitVector::new(values.to_vec())?))
}

/// Inverse-CDF lookup of `u ∈ [0,1)` over (possibly unnormalized) weights.
/// Zero-weight entries are never returned.
pub fn inverse_cdf(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = i;
        if target < acc {
            return i;
        }
    }
    last_positive
}

/// Draws a token. Greedy mode returns the argmax and consumes no randomness.
pub fn sample<R: Rng + ?Sized>(dist: &Distribution, rng: &mut R, mode: DecodeMode) -> TokenId {
    match mode {
        DecodeMode::Greedy => dist.argmax(),
        DecodeMode::Stochastic => inverse_cdf(&dist.0, rng.gen::<f64>()) as TokenId,
    }
}

/// Σ|p − q| / 2.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// KL(p ‖ q) in nats, both sides clamped at the floor.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(&a, &b)| {
            let a = a.max(PROB_FLOOR);
            let b = b.max(PROB_FLOOR);
            a * (a / b).ln()
        })
        .sum()
}
