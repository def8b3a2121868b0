//! Next-token models standing in for the generalist, the private specialist
//! and its generic twin.

mod ngram;
mod table;

use serde::{Deserialize, Serialize};

use crate::dist::{softmax, Distribution, LogitVector};
use crate::error::{Error, Result};
use crate::vocab::TokenId;

pub use ngram::{condition_private, train_ngram, NGramCounts, NGramModel};
pub use table::TableModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelRole {
    Generalist,
    SpecialistPrivate,
    SpecialistGeneric,
}

/// Identity and cost-relevant shape of a model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelProfile {
    pub name: String,
    pub role: ModelRole,
    pub n_params: u64,
    pub layers: u32,
    pub hidden_dim: u32,
}

impl ModelProfile {
    pub fn new(
        name: impl Into<String>,
        role: ModelRole,
        n_params: u64,
        layers: u32,
        hidden_dim: u32,
    ) -> Self {
        Self {
            name: name.into(),
            role,
            n_params,
            layers,
            hidden_dim,
        }
    }

    /// A placeholder profile for test models that never enter cost accounting.
    pub fn toy(name: impl Into<String>, role: ModelRole) -> Self {
        Self::new(name, role, 1, 1, 1)
    }

    pub fn with_role(&self, role: ModelRole) -> Self {
        Self {
            role,
            ..self.clone()
        }
    }
}

/// A deterministic next-token scorer over a fixed vocabulary.
///
/// Implementations report logits; probabilities are their softmax.
pub trait TokenModel: Send + Sync {
    fn vocab_size(&self) -> usize;

    fn profile(&self) -> &ModelProfile;

    fn next_token_logits(&self, history: &[TokenId]) -> Result<LogitVector>;

    fn next_token_distribution(&self, history: &[TokenId]) -> Result<Distribution> {
        Ok(softmax(&self.next_token_logits(history)?))
    }
}

pub(crate) fn check_history(history: &[TokenId], vocab_size: usize) -> Result<()> {
    match history.iter().find(|&&id| id as usize >= vocab_size) {
        Some(&id) => Err(Error::UnknownTokenId {
            id,
            vocab: vocab_size,
        }),
        None => Ok(()),
    }
}

/// Fails unless every model shares the first model's vocabulary size.
pub fn check_shared_vocab(models: &[&dyn TokenModel]) -> Result<usize> {
    let v = models
        .first()
        .map(|m| m.vocab_size())
        .ok_or_else(|| Error::InvalidModel("no models".into()))?;
    for m in models {
        if m.vocab_size() != v {
            return Err(Error::VocabMismatch {
                expected: v,
                got: m.vocab_size(),
            });
        }
    }
    Ok(v)
}

/// PMI reward log P⁺(y) − log P⁻(y) for a model pair at one history.
pub fn pmi_at(
    plus: &dyn TokenModel,
    minus: &dyn TokenModel,
    history: &[TokenId],
) -> Result<Vec<f64>> {
    let p = plus.next_token_distribution(history)?;
    let m = minus.next_token_distribution(history)?;
    crate::fusion::pmi_reward(&p, &m)
}
