use std::collections::BTreeMap;

use crate::dist::{Distribution, LogitVector};
use crate::error::{Error, Result};
use crate::models::{check_history, ModelProfile, TokenModel};
use crate::vocab::TokenId;

/// Explicit lookup table keyed by the last 0, 1 or 2 history tokens.
///
/// Lookup tries the two-token window, then one token, then the empty row.
#[derive(Debug, Clone, PartialEq)]
pub struct TableModel {
    profile: ModelProfile,
    vocab_size: usize,
    rows: BTreeMap<Vec<TokenId>, Distribution>,
}

impl TableModel {
    /// A model whose prediction never depends on history.
    pub fn constant(profile: ModelProfile, row: Distribution) -> Self {
        let vocab_size = row.len();
        let mut rows = BTreeMap::new();
        rows.insert(Vec::new(), row);
        Self {
            profile,
            vocab_size,
            rows,
        }
    }

    pub fn from_probs(profile: ModelProfile, probs: &[f64]) -> Result<Self> {
        Ok(Self::constant(
            profile,
            Distribution::from_probs(probs.to_vec())?,
        ))
    }

    pub fn with_row(mut self, window: &[TokenId], row: Distribution) -> Result<Self> {
        if window.len() > 2 {
            return Err(Error::InvalidModel(
                "table windows hold at most two tokens".into(),
            ));
        }
        check_history(window, self.vocab_size)?;
        if row.len() != self.vocab_size {
            return Err(Error::VocabMismatch {
                expected: self.vocab_size,
                got: row.len(),
            });
        }
        self.rows.insert(window.to_vec(), row);
        Ok(self)
    }

    pub fn row_for(&self, history: &[TokenId]) -> &Distribution {
        for m in (1..=2.min(history.len())).rev() {
            if let Some(row) = self.rows.get(&history[history.len() - m..]) {
                return row;
            }
        }
        &self.rows[&Vec::new()]
    }
}

impl TokenModel for TableModel {
    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn profile(&self) -> &ModelProfile {
        &self.profile
    }

    fn next_token_logits(&self, history: &[TokenId]) -> Result<LogitVector> {
        check_history(history, self.vocab_size)?;
        Ok(self.row_for(history).log_probs())
    }
}
