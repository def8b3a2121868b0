#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use specsteer::dist::Distribution;
use specsteer::experiment::{ExperimentConfig, Side, World};
use specsteer::models::{ModelProfile, ModelRole, TableModel, TokenModel};
use specsteer::protocol::SessionModels;
use specsteer::Vocabulary;

pub fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn default_config() -> ExperimentConfig {
    ExperimentConfig::load(&repo_root().join("configs/default.toml")).expect("bundled config loads")
}

pub fn toy_world() -> World {
    World::load(&default_config(), Side::Both).expect("bundled corpora load")
}

/// Probabilities bounded away from zero so every ratio stays moderate.
pub fn random_probs<R: Rng>(rng: &mut R, v: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..v).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

pub fn table(role: ModelRole, probs: &[f64]) -> Arc<dyn TokenModel> {
    Arc::new(TableModel::from_probs(ModelProfile::toy(format!("{role:?}"), role), probs).unwrap())
}

pub struct Triple {
    pub vocab: Vocabulary,
    pub llm: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
    pub models: SessionModels,
}

pub fn table_triple(llm: Vec<f64>, plus: Vec<f64>, minus: Vec<f64>) -> Triple {
    let vocab = Vocabulary::synthetic(llm.len()).unwrap();
    let models = SessionModels {
        generalist: table(ModelRole::Generalist, &llm),
        specialist: table(ModelRole::SpecialistPrivate, &plus),
        generic: table(ModelRole::SpecialistGeneric, &minus),
    };
    Triple {
        vocab,
        llm,
        plus,
        minus,
        models,
    }
}

pub fn random_triple<R: Rng>(rng: &mut R, v: usize) -> Triple {
    let (l, p, m) = (
        random_probs(rng, v),
        random_probs(rng, v),
        random_probs(rng, v),
    );
    table_triple(l, p, m)
}

pub fn dist(p: &[f64]) -> Distribution {
    Distribution::from_probs(p.to_vec()).unwrap()
}
