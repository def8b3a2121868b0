use std::collections::BTreeMap;
use std::sync::Arc;

use crate::dist::{Distribution, LogitVector};
use crate::error::{Error, Result};
use crate::models::{check_history, ModelProfile, ModelRole, TokenModel};
use crate::vocab::{PrivateContext, TokenId};

pub const MAX_ORDER: usize = 3;

#[derive(Debug, Clone, PartialEq, Default)]
struct ContextCounts {
    total: u64,
    next: BTreeMap<TokenId, u64>,
}

/// Add-k smoothed n-gram counts.
///
/// Counts are kept for every context length below the order so that a history
/// whose full context was never seen falls back to the longest seen suffix.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramCounts {
    order: usize,
    add_k: f64,
    vocab_size: usize,
    contexts: BTreeMap<Vec<TokenId>, ContextCounts>,
}

impl NGramCounts {
    pub fn train(
        corpus: &[Vec<TokenId>],
        order: usize,
        add_k: f64,
        vocab_size: usize,
    ) -> Result<Self> {
        if !(1..=MAX_ORDER).contains(&order) {
            return Err(Error::InvalidModel(format!(
                "order must be 1..={MAX_ORDER}, got {order}"
            )));
        }
        if !(add_k.is_finite() && add_k > 0.0) {
            return Err(Error::InvalidModel(format!(
                "add_k must be > 0, got {add_k}"
            )));
        }
        if vocab_size == 0 {
            return Err(Error::InvalidModel("empty vocabulary".into()));
        }
        if corpus.iter().all(Vec::is_empty) {
            return Err(Error::EmptyCorpus);
        }
        let mut contexts: BTreeMap<Vec<TokenId>, ContextCounts> = BTreeMap::new();
        for doc in corpus {
            check_history(doc, vocab_size)?;
            for (i, &tok) in doc.iter().enumerate() {
                for m in 0..=(order - 1).min(i) {
                    let entry = contexts.entry(doc[i - m..i].to_vec()).or_default();
                    entry.total += 1;
                    *entry.next.entry(tok).or_default() += 1;
                }
            }
        }
        Ok(Self {
            order,
            add_k,
            vocab_size,
            contexts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn add_k(&self) -> f64 {
        self.add_k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Count of `next` after exactly `context`.
    pub fn count(&self, context: &[TokenId], next: TokenId) -> u64 {
        self.contexts
            .get(context)
            .and_then(|c| c.next.get(&next).copied())
            .unwrap_or(0)
    }

    /// Writes P(· | history) into `out`.
    pub fn probs_into(&self, history: &[TokenId], out: &mut Vec<f64>) {
        let longest = (self.order - 1).min(history.len());
        let counts = (0..=longest)
            .rev()
            .find_map(|m| self.contexts.get(&history[history.len() - m..]))
            .expect("unigram context exists for a non-empty corpus");
        let k = self.add_k;
        let denom = counts.total as f64 + k * self.vocab_size as f64;
        out.clear();
        out.resize(self.vocab_size, k / denom);
        for (&id, &c) in &counts.next {
            out[id as usize] = (c as f64 + k) / denom;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct PrivateBlend {
    table: Arc<NGramCounts>,
    mu: f64,
}

/// N-gram model, optionally blended with a private add-k table:
/// P⁺ = (1 − μ)·P_base + μ·P_private.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    profile: ModelProfile,
    base: Arc<NGramCounts>,
    private: Option<PrivateBlend>,
}

impl NGramModel {
    pub fn from_counts(profile: ModelProfile, counts: NGramCounts) -> Self {
        Self {
            profile,
            base: Arc::new(counts),
            private: None,
        }
    }

    pub fn counts(&self) -> &NGramCounts {
        &self.base
    }

    pub fn mu(&self) -> f64 {
        self.private.as_ref().map_or(0.0, |p| p.mu)
    }

    /// The same base statistics without private conditioning.
    pub fn generic(&self) -> NGramModel {
        NGramModel {
            profile: self.profile.with_role(ModelRole::SpecialistGeneric),
            base: Arc::clone(&self.base),
            private: None,
        }
    }

    pub fn probs(&self, history: &[TokenId]) -> Result<Vec<f64>> {
        check_history(history, self.base.vocab_size)?;
        let mut out = Vec::with_capacity(self.base.vocab_size);
        self.base.probs_into(history, &mut out);
        if let Some(blend) = &self.private {
            if blend.mu > 0.0 {
                let mut private = Vec::with_capacity(out.len());
                blend.table.probs_into(history, &mut private);
                for (p, q) in out.iter_mut().zip(&private) {
                    *p = (1.0 - blend.mu) * *p + blend.mu * q;
                }
            }
        }
        Ok(out)
    }
}

impl TokenModel for NGramModel {
    fn vocab_size(&self) -> usize {
        self.base.vocab_size
    }

    fn profile(&self) -> &ModelProfile {
        &self.profile
    }

    fn next_token_logits(&self, history: &[TokenId]) -> Result<LogitVector> {
        Ok(self.next_token_distribution(history)?.log_probs())
    }

    fn next_token_distribution(&self, history: &[TokenId]) -> Result<Distribution> {
        Distribution::from_probs(self.probs(history)?)
    }
}

pub fn train_ngram(
    corpus: &[Vec<TokenId>],
    order: usize,
    add_k: f64,
    vocab_size: usize,
    profile: ModelProfile,
) -> Result<NGramModel> {
    Ok(NGramModel::from_counts(
        profile,
        NGramCounts::train(corpus, order, add_k, vocab_size)?,
    ))
}

/// Blends `base` with an add-k table of the same order trained on the private
/// documents. The base model is left untouched.
pub fn condition_private(base: &NGramModel, ctx: &PrivateContext, mu: f64) -> Result<NGramModel> {
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::InvalidModel(format!(
            "mu must be in [0,1], got {mu}"
        )));
    }
    let private = if ctx.is_empty() {
        if mu > 0.0 {
            return Err(Error::InvalidModel(format!(
                "private context {:?} is empty but mu = {mu}",
                ctx.identifier()
            )));
        }
        None
    } else {
        let table = NGramCounts::train(
            ctx.documents(),
            base.base.order,
            base.base.add_k,
            base.base.vocab_size,
        )?;
        Some(PrivateBlend {
            table: Arc::new(table),
            mu,
        })
    };
    Ok(NGramModel {
        profile: base.profile.with_role(ModelRole::SpecialistPrivate),
        base: Arc::clone(&base.base),
        private,
    })
}
