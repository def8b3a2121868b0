//! Draft → verify → recover decoding between a private edge drafter and a
//! cloud generalist.
//!
//! The edge owns a personalized small model; the cloud owns a large generalist
//! and a generic copy of the small model. Tokens are drafted at the edge,
//! checked in the cloud against the ratio P_LLM / P_SLM⁻, and on rejection a
//! recovery token is sampled at the edge from a sparse steering payload. Only
//! token ids cross the uplink.

// NaN must fail range checks, so `!(x > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod fusion;
pub mod metrics;
pub mod models;
pub mod protocol;
pub mod rng;
pub mod transport;
pub mod vocab;

pub use config::{DecodeMode, ProtocolConfig, ThresholdMode};
pub use dist::{Distribution, LogitVector};
pub use error::{Error, Result};
pub use protocol::{run_session, DraftBatch, RoundTrace, SessionModels, SessionOutput, Verdict};
pub use vocab::{PrivateContext, TokenId, TokenSequence, Vocabulary};
