use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ProtocolConfig;
use crate::error::{Error, Result};
use crate::metrics::{CostModel, LatencyModel};
use crate::models::{ModelProfile, ModelRole};
use crate::transport::ChannelModel;

/// Corpus files. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorporaConfig {
    /// One token per line; shared by every model.
    pub vocab: PathBuf,
    pub generalist: PathBuf,
    pub specialist_base: PathBuf,
    /// The user's private history. Read only on the edge.
    pub private: PathBuf,
}

/// Three history-independent distributions over an explicit vocabulary,
/// replacing the corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TablesConfig {
    pub tokens: Vec<String>,
    pub llm: Vec<f64>,
    pub plus: Vec<f64>,
    pub minus: Vec<f64>,
}

/// Shape and training settings of one n-gram model. A section given in the
/// config replaces the default as a whole.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub role: Option<ModelRole>,
    pub n_params: u64,
    pub layers: u32,
    pub hidden_dim: u32,
    pub order: usize,
    pub add_k: f64,
    /// Private interpolation weight; only meaningful for the specialist.
    #[serde(default)]
    pub mu: f64,
}

impl ModelSpec {
    pub fn generalist() -> Self {
        Self {
            name: "generalist".into(),
            role: Some(ModelRole::Generalist),
            n_params: 32_000_000_000,
            layers: 64,
            hidden_dim: 5120,
            order: 3,
            add_k: 0.05,
            mu: 0.0,
        }
    }

    pub fn specialist() -> Self {
        Self {
            name: "specialist".into(),
            role: Some(ModelRole::SpecialistPrivate),
            n_params: 600_000_000,
            layers: 28,
            hidden_dim: 1024,
            order: 2,
            add_k: 0.5,
            mu: 0.5,
        }
    }

    pub fn profile(&self, role: ModelRole) -> ModelProfile {
        ModelProfile::new(
            self.name.clone(),
            role,
            self.n_params,
            self.layers,
            self.hidden_dim,
        )
    }
}

fn default_generalist() -> ModelSpec {
    ModelSpec::generalist()
}

fn default_specialist() -> ModelSpec {
    ModelSpec::specialist()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub prompt: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            prompt: "where should we eat tonight ?".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub lambda_list: Vec<f64>,
    pub beta_list: Vec<f64>,
    /// Sessions per probe prompt per cell.
    pub trials: usize,
    /// New tokens per sweep session.
    pub max_len: usize,
    /// Prompts whose first generated token is compared with the fused target.
    /// Empty means the run prompt.
    pub probe_prompts: Vec<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            lambda_list: vec![1.0, 0.5, 0.1, 0.01],
            beta_list: vec![0.0, 0.5, 1.0, 2.0],
            trials: 200,
            max_len: 16,
            probe_prompts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub corpora: Option<CorporaConfig>,
    #[serde(default)]
    pub tables: Option<TablesConfig>,
    #[serde(default = "default_generalist")]
    pub generalist: ModelSpec,
    #[serde(default = "default_specialist")]
    pub specialist: ModelSpec,
    #[serde(default)]
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub channel: ChannelModel,
    #[serde(default)]
    pub latency: LatencyModel,
    #[serde(default)]
    pub cost: CostModel,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.resolve(base_dir);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidConfig(format!("cannot read config {}: {e}", path.display()))
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(c) = &mut self.corpora {
            join(&mut c.vocab);
            join(&mut c.generalist);
            join(&mut c.specialist_base);
            join(&mut c.private);
        }
        join(&mut self.output.dir);
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        match (&self.corpora, &self.tables) {
            (Some(_), Some(_)) => return bad("give either [corpora] or [tables], not both".into()),
            (None, None) => return bad("missing [corpora] (or [tables])".into()),
            (Some(c), None) => {
                for p in [&c.vocab, &c.generalist, &c.specialist_base, &c.private] {
                    if !p.is_file() {
                        return bad(format!("corpus file not found: {}", p.display()));
                    }
                }
            }
            (None, Some(t)) => {
                let v = t.tokens.len();
                if t.llm.len() != v || t.plus.len() != v || t.minus.len() != v {
                    return bad(format!("[tables] rows must have {v} entries"));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.specialist.mu) {
            return bad(format!(
                "specialist mu must be in [0, 1], got {}",
                self.specialist.mu
            ));
        }
        if self.generalist.mu != 0.0 {
            return bad("generalist takes no private weight".into());
        }
        if self
            .generalist
            .role
            .is_some_and(|r| r != ModelRole::Generalist)
        {
            return bad("[generalist] role must be generalist".into());
        }
        if self
            .specialist
            .role
            .is_some_and(|r| r != ModelRole::SpecialistPrivate)
        {
            return bad("[specialist] role must be specialist_private".into());
        }
        if self.sweep.lambda_list.is_empty() || self.sweep.beta_list.is_empty() {
            return bad("sweep grids must be nonempty".into());
        }
        if self.sweep.trials == 0 || self.sweep.max_len == 0 {
            return bad("sweep trials and max_len must be positive".into());
        }
        self.channel.validate()?;
        self.latency.validate()?;
        self.cost.validate()
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    /// The output directory is not part of the experiment and is left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        let json = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn latency_model(&self) -> LatencyModel {
        self.latency.with_channel(self.channel)
    }
}
