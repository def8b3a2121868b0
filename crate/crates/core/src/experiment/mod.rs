//! Config-driven experiments behind the command-line tool.

mod config;
mod sweep;

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::dist::{softmax, Distribution};
use crate::error::{Error, Result};
use crate::fusion::{acceptance_vector, fused_target, one_step_law_from_logits, pmi_reward};
use crate::metrics::{write_reports, Summary};
use crate::models::{condition_private, train_ngram, ModelRole, TableModel, TokenModel};
use crate::protocol::{run_session, RoundTrace, SessionModels, SessionOutput};
use crate::vocab::{PrivateContext, TokenId, Vocabulary, EOS_TOKEN};

pub use config::{
    CorporaConfig, ExperimentConfig, ModelSpec, OutputConfig, RunConfig, SweepConfig, TablesConfig,
};
pub use sweep::{run_sweep, sweep_svg, write_sweep_csv, SweepCell};

/// Which models to build. The cloud never reads the private corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Edge,
    Cloud,
    Both,
}

pub struct World {
    pub vocab: Vocabulary,
    pub generalist: Option<Arc<dyn TokenModel>>,
    pub generic: Arc<dyn TokenModel>,
    pub specialist: Option<Arc<dyn TokenModel>>,
    /// Tokens in the private context; zero when none was loaded.
    pub private_tokens: usize,
}

/// Reads a vocabulary file: one token per line, `</s>` included.
pub fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let text = read(path)?;
    let tokens: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(String::from)
        .collect();
    Vocabulary::new(tokens, EOS_TOKEN)
}

/// One document per nonempty line, out-of-vocabulary words mapped to `<unk>`,
/// each closed with `</s>`.
pub fn load_corpus(path: &Path, vocab: &Vocabulary) -> Result<Vec<Vec<TokenId>>> {
    let text = read(path)?;
    let mut docs = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let mut ids = vocab.encode_lossy(line)?;
        ids.push(vocab.eos_id());
        docs.push(ids);
    }
    if docs.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "corpus is empty: {}",
            path.display()
        )));
    }
    Ok(docs)
}

pub fn load_private(path: &Path, vocab: &Vocabulary) -> Result<PrivateContext> {
    let text = read(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    PrivateContext::from_lines(name, text.lines(), vocab)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))
}

impl World {
    pub fn load(cfg: &ExperimentConfig, side: Side) -> Result<Self> {
        let want_cloud = side != Side::Edge;
        let want_edge = side != Side::Cloud;
        if let Some(t) = &cfg.tables {
            let vocab = Vocabulary::new(t.tokens.clone(), EOS_TOKEN)?;
            let table = |spec: &ModelSpec, role, probs: &[f64]| -> Result<Arc<dyn TokenModel>> {
                Ok(Arc::new(TableModel::from_probs(spec.profile(role), probs)?))
            };
            return Ok(Self {
                generalist: want_cloud
                    .then(|| table(&cfg.generalist, ModelRole::Generalist, &t.llm))
                    .transpose()?,
                generic: table(&cfg.specialist, ModelRole::SpecialistGeneric, &t.minus)?,
                specialist: want_edge
                    .then(|| table(&cfg.specialist, ModelRole::SpecialistPrivate, &t.plus))
                    .transpose()?,
                vocab,
                private_tokens: 0,
            });
        }
        let c = cfg
            .corpora
            .as_ref()
            .ok_or_else(|| Error::InvalidConfig("missing [corpora]".into()))?;
        let vocab = load_vocab(&c.vocab)?;
        let v = vocab.size();
        let (g, s) = (&cfg.generalist, &cfg.specialist);
        let generalist: Option<Arc<dyn TokenModel>> = if want_cloud {
            let corpus = load_corpus(&c.generalist, &vocab)?;
            Some(Arc::new(train_ngram(
                &corpus,
                g.order,
                g.add_k,
                v,
                g.profile(ModelRole::Generalist),
            )?))
        } else {
            None
        };
        let base_corpus = load_corpus(&c.specialist_base, &vocab)?;
        let generic = train_ngram(
            &base_corpus,
            s.order,
            s.add_k,
            v,
            s.profile(ModelRole::SpecialistGeneric),
        )?;
        let (specialist, private_tokens): (Option<Arc<dyn TokenModel>>, usize) = if want_edge {
            let ctx = load_private(&c.private, &vocab)?;
            let n = ctx.token_count();
            (Some(Arc::new(condition_private(&generic, &ctx, s.mu)?)), n)
        } else {
            (None, 0)
        };
        Ok(Self {
            vocab,
            generalist,
            generic: Arc::new(generic),
            specialist,
            private_tokens,
        })
    }

    pub fn models(&self) -> Result<SessionModels> {
        let missing = |what: &str| Error::InvalidConfig(format!("{what} not loaded on this side"));
        Ok(SessionModels {
            generalist: self
                .generalist
                .clone()
                .ok_or_else(|| missing("generalist"))?,
            specialist: self
                .specialist
                .clone()
                .ok_or_else(|| missing("specialist"))?,
            generic: self.generic.clone(),
        })
    }

    /// Prompts must be fully in-vocabulary.
    pub fn encode_prompt(&self, text: &str) -> Result<Vec<TokenId>> {
        self.vocab.encode(text)
    }
}

pub struct RunOutcome {
    pub output: SessionOutput,
    pub traces: Vec<RoundTrace>,
    pub summary: Summary,
    pub text: String,
}

/// One in-process session; writes `run_trace.csv` and `run_summary.json`.
pub fn run(cfg: &ExperimentConfig, world: &World) -> Result<RunOutcome> {
    let prompt = world.encode_prompt(&cfg.run.prompt)?;
    let output = run_session(&cfg.protocol, &world.models()?, &prompt, &world.vocab)?;
    let mut traces = output.traces.clone();
    let latency = cfg.latency_model();
    latency.stamp(&mut traces);
    let summary = Summary::from_traces(
        &cfg.hash(),
        &traces,
        &latency,
        &cfg.cost,
        world.private_tokens,
    );
    write_reports(&cfg.output.dir, "run", &summary, &traces)?;
    let text = world.vocab.decode(output.generated());
    Ok(RunOutcome {
        output,
        traces,
        summary,
        text,
    })
}

/// Everything the fusion layer knows about the next token after `history`.
pub fn oracle_report(cfg: &ExperimentConfig, world: &World, history: &[TokenId]) -> Result<String> {
    let m = world.models()?;
    let (h_llm, h_plus, h_minus) = (
        m.generalist.next_token_logits(history)?,
        m.specialist.next_token_logits(history)?,
        m.generic.next_token_logits(history)?,
    );
    let (p_llm, p_plus, p_minus) = (softmax(&h_llm), softmax(&h_plus), softmax(&h_minus));
    let reward = pmi_reward(&p_plus, &p_minus)?;
    let fused = fused_target(&p_llm, &p_plus, &p_minus)?;
    let (lambda, beta) = (cfg.protocol.lambda, cfg.protocol.beta);
    let alpha = acceptance_vector(&p_llm, &p_minus, lambda)?;
    let law = one_step_law_from_logits(&h_llm, &h_plus, &h_minus, lambda, beta)?;

    let mut out = String::new();
    let _ = writeln!(out, "# config_hash={}", cfg.hash());
    let _ = writeln!(out, "history: {:?}", world.vocab.decode(history));
    let _ = writeln!(out, "lambda = {lambda}  beta = {beta}");
    let _ = writeln!(out, "Z = {:.6}", fused.partition);
    let _ = writeln!(out, "rejection mass = {:.6}", law.rejection_mass);
    let _ = writeln!(
        out,
        "{:<16} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
        "token", "P_LLM", "P_SLM+", "P_SLM-", "r", "P*", "alpha", "P_out"
    );
    let v = world.vocab.size();
    let mut rows: Vec<usize> = (0..v).collect();
    if v > 24 {
        rows.sort_by(|&a, &b| {
            fused.target.probs()[b]
                .total_cmp(&fused.target.probs()[a])
                .then(a.cmp(&b))
        });
        rows.truncate(20);
    }
    for i in rows {
        let id = i as TokenId;
        let _ = writeln!(
            out,
            "{:<16} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6} {:>10.6}",
            world.vocab.token(id).unwrap_or("?"),
            p_llm.get(id),
            p_plus.get(id),
            p_minus.get(id),
            reward[i],
            fused.target.get(id),
            alpha[i],
            law.output.get(id),
        );
    }
    if v > 24 {
        let _ = writeln!(out, "({} more tokens not shown)", v - 20);
    }
    Ok(out)
}

/// Frequency of each token among `samples`, as a distribution over `vocab_size`.
pub fn empirical(samples: &[TokenId], vocab_size: usize) -> Result<Distribution> {
    let mut counts = vec![0.0; vocab_size];
    for &s in samples {
        counts[s as usize] += 1.0;
    }
    Distribution::from_weights(counts)
}
