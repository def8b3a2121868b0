//! Audits uplink frames for anything beyond token ids and handshake config.

use std::collections::HashSet;
use std::fmt;

use crate::transport::wire::{self, Frame, Hello, MsgType};
use crate::vocab::{PrivateContext, TokenId};

/// Consecutive private-document ids that count as a copied run.
pub const ID_RUN: usize = 8;
/// Shortest private word searched for as raw text.
pub const MIN_WORD: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    /// A frame type that may only flow downlink, e.g. a steering payload.
    DownlinkType { frame: usize, msg_type: MsgType },
    /// A frame whose payload is not exactly its declared fields.
    Malformed { frame: usize, reason: String },
    /// Raw private text.
    PrivateText { frame: usize, word: String },
    /// A run of private-document token ids.
    PrivateIds { frame: usize, offset: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DownlinkType { frame, msg_type } => {
                write!(f, "frame {frame}: {msg_type:?} sent uplink")
            }
            Self::Malformed { frame, reason } => write!(f, "frame {frame}: {reason}"),
            Self::PrivateText { frame, word } => write!(f, "frame {frame}: private text {word:?}"),
            Self::PrivateIds { frame, offset } => {
                write!(f, "frame {frame}: private id run at byte {offset}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScanReport {
    pub frames: usize,
    pub violations: Vec<Violation>,
}

impl ScanReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

pub struct UplinkScanner {
    words: Vec<Vec<u8>>,
    runs: HashSet<[u8; 4 * ID_RUN]>,
}

impl UplinkScanner {
    pub fn new(ctx: &PrivateContext) -> Self {
        let mut words: Vec<Vec<u8>> = ctx
            .texts()
            .iter()
            .flat_map(|t| t.split_whitespace())
            .filter(|w| w.len() >= MIN_WORD)
            .map(|w| w.as_bytes().to_vec())
            .collect::<HashSet<_>>()
            .into_iter()
            .collect();
        words.sort();
        let runs = ctx
            .documents()
            .iter()
            .flat_map(|d| d.windows(ID_RUN))
            .map(id_bytes)
            .collect();
        Self { words, runs }
    }

    pub fn scan(&self, uplink: &[Frame]) -> ScanReport {
        let mut violations = Vec::new();
        for (i, f) in uplink.iter().enumerate() {
            let structural = match f.msg_type {
                MsgType::Hello => Hello::decode(f).err(),
                MsgType::Draft => wire::decode_draft(f).err(),
                MsgType::Done => wire::Done::decode(f).err(),
                MsgType::Verdict => {
                    violations.push(Violation::DownlinkType {
                        frame: i,
                        msg_type: f.msg_type,
                    });
                    None
                }
            };
            if let Some(e) = structural {
                violations.push(Violation::Malformed {
                    frame: i,
                    reason: e.to_string(),
                });
            }
            let raw = f.encode();
            for w in &self.words {
                if contains(&raw, w) {
                    violations.push(Violation::PrivateText {
                        frame: i,
                        word: String::from_utf8_lossy(w).into_owned(),
                    });
                }
            }
            if raw.len() >= 4 * ID_RUN {
                for offset in 0..=raw.len() - 4 * ID_RUN {
                    let window: [u8; 4 * ID_RUN] =
                        raw[offset..offset + 4 * ID_RUN].try_into().expect("window");
                    if self.runs.contains(&window) {
                        violations.push(Violation::PrivateIds { frame: i, offset });
                    }
                }
            }
        }
        ScanReport {
            frames: uplink.len(),
            violations,
        }
    }
}

fn id_bytes(ids: &[TokenId]) -> [u8; 4 * ID_RUN] {
    let mut out = [0u8; 4 * ID_RUN];
    for (chunk, id) in out.chunks_exact_mut(4).zip(ids) {
        chunk.copy_from_slice(&id.to_le_bytes());
    }
    out
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    !needle.is_empty() && hay.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::{DraftBatch, SparseSteeringPayload, SteeringEntry, Verdict};
    use crate::vocab::Vocabulary;

    fn ctx() -> (Vocabulary, PrivateContext) {
        let vocab =
            Vocabulary::from_words("a b c d e f g h i j gino's trattoria".split(' ')).unwrap();
        let ctx =
            PrivateContext::from_lines("u", ["a b c d e f g h i j", "gino's trattoria"], &vocab)
                .unwrap();
        (vocab, ctx)
    }

    #[test]
    fn clean_drafts_pass() {
        let (_, ctx) = ctx();
        let s = UplinkScanner::new(&ctx);
        let frames = vec![
            wire::encode_draft(
                &DraftBatch {
                    seq_no: 0,
                    token_ids: vec![0, 1, 2, 3],
                },
                None,
            )
            .unwrap(),
            wire::Done {
                rounds: 1,
                delta: Some(4),
            }
            .encode(),
        ];
        assert!(s.scan(&frames).is_clean());
    }

    #[test]
    fn flags_leaks() {
        let (_, ctx) = ctx();
        let s = UplinkScanner::new(&ctx);
        let verdict = Verdict {
            seq_no: 0,
            accepted_count: 0,
            recovery: Some(SparseSteeringPayload {
                entries: vec![SteeringEntry {
                    token: 1,
                    value: 0.5,
                }],
            }),
        };
        let leaked_ids = ctx.documents()[0].clone();
        let mut text = wire::encode_draft(
            &DraftBatch {
                seq_no: 0,
                token_ids: vec![1],
            },
            None,
        )
        .unwrap();
        text.payload.extend_from_slice(b"trattoria");
        let report = s.scan(&[
            wire::encode_verdict(&verdict).unwrap(),
            wire::encode_draft(
                &DraftBatch {
                    seq_no: 0,
                    token_ids: leaked_ids,
                },
                None,
            )
            .unwrap(),
            text,
        ]);
        let kinds: Vec<_> = report
            .violations
            .iter()
            .map(std::mem::discriminant)
            .collect();
        assert!(
            kinds.contains(&std::mem::discriminant(&Violation::DownlinkType {
                frame: 0,
                msg_type: MsgType::Verdict
            }))
        );
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::PrivateIds { frame: 1, .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::PrivateText { frame: 2, .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::Malformed { frame: 2, .. })));
    }
}
