//! Shared vocabulary, token sequences and the edge-only private context.

use std::collections::HashMap;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const EOS_TOKEN: &str = "</s>";
pub const UNK_TOKEN: &str = "<unk>";

/// Ordered token strings with unique entries; ids are positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    eos_id: TokenId,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, eos: &str) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidVocabulary("no tokens".into()));
        }
        if tokens.len() > u32::MAX as usize {
            return Err(Error::InvalidVocabulary("too many tokens".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::InvalidVocabulary(format!("bad token {tok:?}")));
            }
            if index.insert(tok.clone(), i as TokenId).is_some() {
                return Err(Error::InvalidVocabulary(format!("duplicate token {tok:?}")));
            }
        }
        let eos_id = *index
            .get(eos)
            .ok_or_else(|| Error::InvalidVocabulary(format!("eos token {eos:?} missing")))?;
        Ok(Self {
            tokens,
            index,
            eos_id,
        })
    }

    /// Builds a vocabulary from words in first-seen order, appending `</s>` and
    /// `<unk>` when absent.
    pub fn from_words<'a, I>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut seen = std::collections::HashSet::new();
        let mut tokens = Vec::new();
        for w in words {
            if seen.insert(w) {
                tokens.push(w.to_string());
            }
        }
        for special in [EOS_TOKEN, UNK_TOKEN] {
            if !seen.contains(special) {
                tokens.push(special.to_string());
            }
        }
        Self::new(tokens, EOS_TOKEN)
    }

    /// `t0 .. t{size-2}` followed by `</s>`, for models defined directly over ids.
    pub fn synthetic(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidVocabulary(format!(
                "synthetic vocabulary of size {size}"
            )));
        }
        let mut tokens: Vec<String> = (0..size - 1).map(|i| format!("t{i}")).collect();
        tokens.push(EOS_TOKEN.to_string());
        Self::new(tokens, EOS_TOKEN)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn eos_id(&self) -> TokenId {
        self.eos_id
    }

    pub fn unk_id(&self) -> Option<TokenId> {
        self.id(UNK_TOKEN)
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn check(&self, id: TokenId) -> Result<()> {
        if (id as usize) < self.size() {
            Ok(())
        } else {
            Err(Error::UnknownTokenId {
                id,
                vocab: self.size(),
            })
        }
    }

    /// Whitespace tokenization; every word must be in the vocabulary.
    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>> {
        text.split_whitespace()
            .map(|w| self.id(w).ok_or_else(|| Error::UnknownToken(w.to_string())))
            .collect()
    }

    /// Whitespace tokenization mapping out-of-vocabulary words to `<unk>`.
    pub fn encode_lossy(&self, text: &str) -> Result<Vec<TokenId>> {
        let unk = self.unk_id();
        text.split_whitespace()
            .map(|w| {
                self.id(w)
                    .or(unk)
                    .ok_or_else(|| Error::UnknownToken(w.to_string()))
            })
            .collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> String {
        ids.iter()
            .map(|&id| self.token(id).unwrap_or(UNK_TOKEN))
            .collect::<Vec<_>>()
            .join(" ")
    }

    /// 64-bit digest of the ordered token list, exchanged in the handshake so
    /// both endpoints can prove they share a vocabulary.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = Sha256::new();
        for tok in &self.tokens {
            hasher.update(tok.as_bytes());
            hasher.update([0u8]);
        }
        hasher.update(self.eos_id.to_le_bytes());
        let digest = hasher.finalize();
        u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
    }
}

/// A capped token sequence over a bound vocabulary. Nothing may follow EOS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSequence {
    ids: Vec<TokenId>,
    max_len: usize,
    vocab_size: usize,
    eos_id: TokenId,
}

impl TokenSequence {
    pub fn new(ids: Vec<TokenId>, max_len: usize, vocab: &Vocabulary) -> Result<Self> {
        if max_len == 0 {
            return Err(Error::InvalidSequence("max_len must be positive".into()));
        }
        let mut seq = Self {
            ids: Vec::with_capacity(ids.len()),
            max_len,
            vocab_size: vocab.size(),
            eos_id: vocab.eos_id(),
        };
        for id in ids {
            seq.push(id)?;
        }
        Ok(seq)
    }

    pub fn push(&mut self, id: TokenId) -> Result<()> {
        if id as usize >= self.vocab_size {
            return Err(Error::UnknownTokenId {
                id,
                vocab: self.vocab_size,
            });
        }
        if self.is_closed() {
            return Err(Error::InvalidSequence("token after end-of-sequence".into()));
        }
        if self.ids.len() >= self.max_len {
            return Err(Error::InvalidSequence(format!(
                "length cap {} reached",
                self.max_len
            )));
        }
        self.ids.push(id);
        Ok(())
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// True once the last token is EOS.
    pub fn is_closed(&self) -> bool {
        self.ids.last() == Some(&self.eos_id)
    }

    pub fn into_ids(self) -> Vec<TokenId> {
        self.ids
    }
}

/// User history available only to the edge. Deliberately not serializable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrivateContext {
    identifier: String,
    documents: Vec<Vec<TokenId>>,
    texts: Vec<String>,
}

impl PrivateContext {
    pub fn new(identifier: impl Into<String>, documents: Vec<Vec<TokenId>>) -> Self {
        Self {
            identifier: identifier.into(),
            documents,
            texts: Vec::new(),
        }
    }

    /// Tokenizes raw lines, keeping the original text for leak scanning.
    pub fn from_lines<'a, I>(
        identifier: impl Into<String>,
        lines: I,
        vocab: &Vocabulary,
    ) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut documents = Vec::new();
        let mut texts = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            documents.push(vocab.encode_lossy(line)?);
            texts.push(line.to_string());
        }
        Ok(Self {
            identifier: identifier.into(),
            documents,
            texts,
        })
    }

    pub fn identifier(&self) -> &str {
        &self.identifier
    }

    pub fn documents(&self) -> &[Vec<TokenId>] {
        &self.documents
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn token_count(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.token_count() == 0
    }
}
