use rand::Rng;

use crate::config::DecodeMode;
use crate::dist::{inverse_cdf, softmax, LogitVector};
use crate::error::{Error, Result};
use crate::fusion::acceptance_probability;
use crate::protocol::{DraftBatch, SparseSteeringPayload, Verdict};
use crate::vocab::TokenId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyParams {
    pub beta: f64,
    pub top_k: usize,
    pub mode: DecodeMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub verdict: Verdict,
    /// α at each examined position, up to and including the first rejection.
    pub alphas: Vec<f64>,
}

/// Scans the batch left to right, accepting token t with probability α_t.
///
/// `h_llm_seq[t]` and `h_minus_seq[t]` are the cloud models' logits for the
/// position of `batch.token_ids[t]`. The drafter's distribution is not an
/// input. Stochastic mode draws one uniform per examined position; greedy mode
/// accepts iff α_t = 1 and draws nothing.
pub fn verify<R: Rng + ?Sized>(
    batch: &DraftBatch,
    h_llm_seq: &[LogitVector],
    h_minus_seq: &[LogitVector],
    lambda: f64,
    params: &VerifyParams,
    rng: &mut R,
) -> Result<VerifyOutcome> {
    let thresholds = vec![lambda; batch.len()];
    verify_with_thresholds(batch, h_llm_seq, h_minus_seq, &thresholds, params, rng)
}

/// [`verify`] with a threshold per position.
pub fn verify_with_thresholds<R: Rng + ?Sized>(
    batch: &DraftBatch,
    h_llm_seq: &[LogitVector],
    h_minus_seq: &[LogitVector],
    thresholds: &[f64],
    params: &VerifyParams,
    rng: &mut R,
) -> Result<VerifyOutcome> {
    let k = batch.len();
    if k == 0 {
        return Err(Error::Protocol("empty draft batch".into()));
    }
    if h_llm_seq.len() != k || h_minus_seq.len() != k || thresholds.len() != k {
        return Err(Error::Protocol(format!(
            "batch of {k} scored with {}/{} logit rows and {} thresholds",
            h_llm_seq.len(),
            h_minus_seq.len(),
            thresholds.len()
        )));
    }
    let mut alphas = Vec::with_capacity(k);
    for (t, &token) in batch.token_ids.iter().enumerate() {
        let (h_llm, h_minus) = (&h_llm_seq[t], &h_minus_seq[t]);
        if h_llm.len() != h_minus.len() || token as usize >= h_llm.len() {
            return Err(Error::UnknownTokenId {
                id: token,
                vocab: h_llm.len().min(h_minus.len()),
            });
        }
        if !(thresholds[t].is_finite() && thresholds[t] > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "threshold {} at {t}",
                thresholds[t]
            )));
        }
        let alpha = acceptance_probability(
            softmax(h_llm).get(token),
            softmax(h_minus).get(token),
            thresholds[t],
        );
        alphas.push(alpha);
        let accept = match params.mode {
            DecodeMode::Greedy => alpha >= 1.0,
            DecodeMode::Stochastic => rng.gen::<f64>() < alpha,
        };
        if !accept {
            let payload =
                SparseSteeringPayload::from_logits(h_llm, h_minus, params.beta, params.top_k)?;
            return Ok(VerifyOutcome {
                verdict: Verdict {
                    seq_no: batch.seq_no,
                    accepted_count: t,
                    recovery: Some(payload),
                },
                alphas,
            });
        }
    }
    Ok(VerifyOutcome {
        verdict: Verdict {
            seq_no: batch.seq_no,
            accepted_count: k,
            recovery: None,
        },
        alphas,
    })
}

fn recovery_scores(
    payload: &SparseSteeringPayload,
    h_plus: &LogitVector,
    beta: f64,
) -> Result<Vec<f64>> {
    payload.validate(h_plus.len())?;
    Ok(payload
        .entries
        .iter()
        .map(|e| e.value as f64 + beta * h_plus.get(e.token))
        .collect())
}

/// Recovery law over the payload's support: softmax of value + β·h⁺.
/// Tokens outside the support have probability zero.
pub fn recovery_law(
    payload: &SparseSteeringPayload,
    h_plus: &LogitVector,
    beta: f64,
) -> Result<Vec<(TokenId, f64)>> {
    let scores = recovery_scores(payload, h_plus, beta)?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(payload
        .entries
        .iter()
        .zip(w)
        .map(|(e, w)| (e.token, w / total))
        .collect())
}

/// Samples the recovery token at the rejected position.
///
/// Greedy mode picks the highest score; scores that differ by less than the
/// f32 rounding of their wire values are treated as tied and resolved to the
/// lowest token id, so greedy recovery agrees with an exact argmax over the
/// unquantized scores.
pub fn recover<R: Rng + ?Sized>(
    payload: &SparseSteeringPayload,
    h_plus: &LogitVector,
    beta: f64,
    mode: DecodeMode,
    rng: &mut R,
) -> Result<TokenId> {
    match mode {
        DecodeMode::Stochastic => {
            let law = recovery_law(payload, h_plus, beta)?;
            let weights: Vec<f64> = law.iter().map(|(_, p)| *p).collect();
            Ok(law[inverse_cdf(&weights, rng.gen::<f64>())].0)
        }
        DecodeMode::Greedy => {
            let scores = recovery_scores(payload, h_plus, beta)?;
            let slack = |i: usize| payload.entries[i].value.abs() as f64 * f32::EPSILON as f64;
            let best = crate::dist::argmax(&scores);
            let floor = scores[best] - slack(best);
            Ok(payload
                .entries
                .iter()
                .enumerate()
                .filter(|&(i, _)| scores[i] + slack(i) >= floor - 1e-12)
                .map(|(_, e)| e.token)
                .min()
                .expect("best entry passes its own filter"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::{Distribution, PROB_FLOOR};
    use crate::fusion::fused_target;
    use crate::protocol::SteeringEntry;
    use crate::rng::{Purpose, SessionRng};

    fn lv(p: &[f64]) -> LogitVector {
        Distribution::from_probs(p.to_vec()).unwrap().log_probs()
    }

    fn params(mode: DecodeMode) -> VerifyParams {
        VerifyParams {
            beta: 1.0,
            top_k: 3,
            mode,
        }
    }

    #[test]
    fn alpha_hand_values() {
        let mut rng = SessionRng::new(0).stream(0, Purpose::Verify);
        let batch = DraftBatch {
            seq_no: 0,
            token_ids: vec![0],
        };
        let out = verify(
            &batch,
            &[lv(&[0.3, 0.7])],
            &[lv(&[0.4, 0.6])],
            0.5,
            &params(DecodeMode::Stochastic),
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.alphas, vec![1.0]);
        assert_eq!(out.verdict.accepted_count, 1);

        let out = verify(
            &batch,
            &[lv(&[0.1, 0.9])],
            &[lv(&[0.4, 0.6])],
            1.0,
            &params(DecodeMode::Stochastic),
            &mut rng,
        )
        .unwrap();
        assert!((out.alphas[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn tiny_lambda_accepts_everything() {
        let mut rng = SessionRng::new(3).stream(0, Purpose::Verify);
        let batch = DraftBatch {
            seq_no: 0,
            token_ids: vec![2, 2, 1, 0],
        };
        let hl = vec![lv(&[0.01, 0.01, 0.98]); 4];
        let hm = vec![lv(&[0.98, 0.01, 0.01]); 4];
        let out = verify(
            &batch,
            &hl,
            &hm,
            1e-15,
            &params(DecodeMode::Stochastic),
            &mut rng,
        )
        .unwrap();
        assert_eq!(out.verdict.accepted_count, 4);
        assert!(out.verdict.recovery.is_none());
    }

    #[test]
    fn greedy_rejects_unless_certain() {
        let mut rng = SessionRng::new(3).stream(0, Purpose::Verify);
        let batch = DraftBatch {
            seq_no: 7,
            token_ids: vec![0, 1],
        };
        let hl = vec![lv(&[0.5, 0.25, 0.25]), lv(&[0.5, 0.25, 0.25])];
        let hm = vec![lv(&[0.5, 0.25, 0.25]), lv(&[0.2, 0.6, 0.2])];
        let out = verify(&batch, &hl, &hm, 1.0, &params(DecodeMode::Greedy), &mut rng).unwrap();
        assert_eq!(out.verdict.accepted_count, 1);
        assert_eq!(out.verdict.seq_no, 7);
        assert_eq!(out.alphas.len(), 2);
        assert!(out.verdict.recovery.is_some());
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let mut rng = SessionRng::new(0).stream(0, Purpose::Verify);
        let batch = DraftBatch {
            seq_no: 0,
            token_ids: vec![0, 1],
        };
        assert!(verify(
            &batch,
            &[lv(&[0.5, 0.5])],
            &[lv(&[0.5, 0.5])],
            1.0,
            &params(DecodeMode::Greedy),
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn beta_zero_recovers_truncated_llm() {
        let hl = lv(&[0.1, 0.5, 0.15, 0.25]);
        let hm = lv(&[0.4, 0.3, 0.2, 0.1]);
        let hp = lv(&[0.7, 0.1, 0.1, 0.1]);
        let payload = SparseSteeringPayload::from_logits(&hl, &hm, 0.0, 2).unwrap();
        let law = recovery_law(&payload, &hp, 0.0).unwrap();
        let (a, b) = (0.5, 0.25);
        assert_eq!(law[0].0, 1);
        assert!((law[0].1 - a / (a + b)).abs() < 1e-6);
        assert!((law[1].1 - b / (a + b)).abs() < 1e-6);
    }

    #[test]
    fn vanishing_steering_recovers_llm() {
        let hl = lv(&[0.1, 0.5, 0.15, 0.25]);
        let hm = lv(&[0.4, 0.3, 0.2, 0.1]);
        let payload = SparseSteeringPayload::from_logits(&hl, &hm, 1.7, 4).unwrap();
        let law = recovery_law(&payload, &hm, 1.7).unwrap();
        for (id, p) in law {
            assert!((p - softmax(&hl).get(id)).abs() < 1e-6);
        }
    }

    #[test]
    fn full_support_beta_one_recovers_target() {
        let (pl, pp, pm) = ([0.5, 0.3, 0.2], [0.2, 0.7, 0.1], [0.4, 0.4, 0.2]);
        let payload = SparseSteeringPayload::from_logits(&lv(&pl), &lv(&pm), 1.0, 3).unwrap();
        let law = recovery_law(&payload, &lv(&pp), 1.0).unwrap();
        let f = fused_target(
            &Distribution::from_probs(pl.to_vec()).unwrap(),
            &Distribution::from_probs(pp.to_vec()).unwrap(),
            &Distribution::from_probs(pm.to_vec()).unwrap(),
        )
        .unwrap();
        for (id, p) in law {
            assert!((p - f.target.get(id)).abs() < 1e-6);
        }
    }

    #[test]
    fn greedy_recovery_ties_resolve_low() {
        // Scores equal in exact arithmetic, perturbed by f32 rounding.
        let h_minus = [0.123_456_789_f64, 0.987_654_321];
        let h_llm = [-1.0, -1.0];
        let payload = SparseSteeringPayload::from_logits(
            &LogitVector::new(h_llm.to_vec()).unwrap(),
            &LogitVector::new(h_minus.to_vec()).unwrap(),
            1.0,
            2,
        )
        .unwrap();
        let mut rng = SessionRng::new(0).stream(0, Purpose::Recover);
        let tok = recover(
            &payload,
            &LogitVector::new(h_minus.to_vec()).unwrap(),
            1.0,
            DecodeMode::Greedy,
            &mut rng,
        )
        .unwrap();
        assert_eq!(tok, 0);
    }

    #[test]
    fn empty_payload_rejected() {
        let mut rng = SessionRng::new(0).stream(0, Purpose::Recover);
        let empty = SparseSteeringPayload { entries: vec![] };
        assert!(recover(
            &empty,
            &lv(&[0.5, 0.5]),
            1.0,
            DecodeMode::Stochastic,
            &mut rng
        )
        .is_err());
        let bad = SparseSteeringPayload {
            entries: vec![SteeringEntry {
                token: 9,
                value: 0.0,
            }],
        };
        assert!(recover(
            &bad,
            &lv(&[0.5, 0.5]),
            1.0,
            DecodeMode::Stochastic,
            &mut rng
        )
        .is_err());
        assert!(PROB_FLOOR > 0.0);
    }
}
