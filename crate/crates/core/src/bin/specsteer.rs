use std::fs;
use std::io::BufWriter;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use specsteer::config::DecodeMode;
use specsteer::experiment::{self, ExperimentConfig, Side, World};
use specsteer::metrics::{write_reports, Summary};
use specsteer::protocol::{run_session, EdgeNode};
use specsteer::rng::SessionRng;
use specsteer::transport::{self, framelog, DEFAULT_TIMEOUT};

#[derive(Parser)]
#[command(
    name = "specsteer",
    version,
    about = "Draft-verify-recover decoding between a private edge drafter and a cloud verifier"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config (TOML).
    #[arg(
        long,
        global = true,
        env = "SPECSTEER_CONFIG",
        default_value = "configs/default.toml"
    )]
    config: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    lambda: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long = "top-k", global = true)]
    top_k: Option<usize>,
    #[arg(long, global = true)]
    mode: Option<DecodeMode>,
    /// Output directory; overrides [output] dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate once in-process and write trace CSV + summary JSON.
    Run,
    /// Run the (lambda, beta) grid and write sweep CSV + SVG charts.
    Sweep,
    /// Print the fused target, acceptance vector and one-step law.
    Oracle {
        /// History text; defaults to the run prompt.
        #[arg(long)]
        history: Option<String>,
    },
    /// Host the generalist and generic specialist behind a socket.
    ServeCloud {
        #[arg(long)]
        bind: String,
        /// Stop after this many sessions.
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Run the private drafter against a remote cloud.
    RunEdge {
        #[arg(long)]
        connect: String,
    },
    /// Measure real elapsed time (informational only).
    Bench {
        #[arg(long, default_value_t = 50)]
        sessions: usize,
    },
}

fn load_config(g: &Global) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&g.config)?;
    let p = &mut cfg.protocol;
    if let Some(v) = g.seed {
        p.seed = v;
    }
    if let Some(v) = g.lambda {
        p.lambda = v;
    }
    if let Some(v) = g.beta {
        p.beta = v;
    }
    if let Some(v) = g.k {
        p.horizon_k = v;
    }
    if let Some(v) = g.top_k {
        p.top_k = v;
    }
    if let Some(v) = g.mode {
        p.mode = v;
    }
    if let Some(dir) = &g.out {
        cfg.output.dir = dir.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_world(cfg: &ExperimentConfig, side: Side) -> Result<World> {
    let world = World::load(cfg, side)?;
    cfg.protocol.validate(world.vocab.size())?;
    Ok(world)
}

fn write_log(dir: &Path, name: &str, hash: &str, frames: &[transport::wire::Frame]) -> Result<()> {
    let path = dir.join(name);
    framelog::write_log(&path, Some(&format!("config_hash={hash}")), frames)
        .with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SPECSTEER_LOG", "warn")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli.global)?;
    let hash = cfg.hash();
    let out_dir = cfg.output.dir.clone();
    fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    match cli.command {
        Command::Run => {
            let world = load_world(&cfg, Side::Both)?;
            let r = experiment::run(&cfg, &world)?;
            println!("{}", r.text);
            eprintln!(
                "rounds={} alpha_mean={} speedup={} -> {}",
                r.summary.rounds,
                fmt_opt(r.summary.alpha_mean),
                fmt_opt(r.summary.speedup),
                out_dir.display()
            );
        }
        Command::Sweep => {
            let world = load_world(&cfg, Side::Both)?;
            let started = Instant::now();
            let cells = experiment::run_sweep(&cfg, &world)?;
            let csv = fs::File::create(out_dir.join("sweep.csv"))?;
            experiment::write_sweep_csv(BufWriter::new(csv), &hash, &cells)?;
            fs::write(
                out_dir.join("sweep_alpha.svg"),
                experiment::sweep_svg(&cells, &hash, "mean acceptance probability", |c| {
                    c.alpha_mean
                }),
            )?;
            fs::write(
                out_dir.join("sweep_speedup.svg"),
                experiment::sweep_svg(&cells, &hash, "modeled speedup", |c| c.speedup),
            )?;
            for c in &cells {
                println!(
                    "lambda={:<6} beta={:<4} alpha_mean={:.4} speedup={:.3} kl={:.4}",
                    c.lambda, c.beta, c.alpha_mean, c.speedup, c.kl_first_token
                );
            }
            eprintln!(
                "{} cells in {:.1?} -> {}",
                cells.len(),
                started.elapsed(),
                out_dir.display()
            );
        }
        Command::Oracle { history } => {
            let world = load_world(&cfg, Side::Both)?;
            let text = history.unwrap_or_else(|| cfg.run.prompt.clone());
            let ids = world.encode_prompt(&text)?;
            let report = experiment::oracle_report(&cfg, &world, &ids)?;
            fs::write(out_dir.join("oracle.txt"), &report)?;
            print!("{report}");
        }
        Command::ServeCloud { bind, sessions } => {
            let world = load_world(&cfg, Side::Cloud)?;
            let listener = TcpListener::bind(&bind).with_context(|| format!("binding {bind}"))?;
            eprintln!("serving on {}", listener.local_addr()?);
            let generalist = world.generalist.clone().context("generalist not loaded")?;
            let mut served = 0usize;
            let mut failures = 0usize;
            let mut log_err = None;
            transport::serve(
                &listener,
                generalist,
                world.generic.clone(),
                &world.vocab,
                Some(DEFAULT_TIMEOUT),
                sessions,
                |s| {
                    let n = served;
                    served += 1;
                    match &s.result {
                        Ok(r) => {
                            eprintln!("session {n} from {:?}: {} rounds", s.peer, r.verdicts.len())
                        }
                        Err(e) => {
                            failures += 1;
                            eprintln!("session {n} from {:?} failed: {e}", s.peer);
                        }
                    }
                    for (name, frames) in [("uplink", &s.uplink), ("downlink", &s.downlink)] {
                        if let Err(e) =
                            write_log(&out_dir, &format!("cloud_{n}_{name}.bin"), &hash, frames)
                        {
                            log_err.get_or_insert(e);
                        }
                    }
                },
            )?;
            if let Some(e) = log_err {
                return Err(e);
            }
            if failures > 0 {
                bail!("{failures} of {served} sessions failed");
            }
        }
        Command::RunEdge { connect } => {
            let world = load_world(&cfg, Side::Edge)?;
            let prompt = world.encode_prompt(&cfg.run.prompt)?;
            let drafter = world.specialist.clone().context("specialist not loaded")?;
            let mut edge = EdgeNode::new(drafter, &cfg.protocol, &prompt, &world.vocab)?;
            let (report, downlink, uplink) = transport::connect_edge(
                &connect,
                &mut edge,
                world.vocab.fingerprint(),
                Some(DEFAULT_TIMEOUT),
            )
            .with_context(|| format!("session with {connect}"))?;
            write_log(&out_dir, "edge_uplink.bin", &hash, &uplink)?;
            write_log(&out_dir, "edge_downlink.bin", &hash, &downlink)?;
            let mut traces = report.traces.clone();
            let latency = cfg.latency_model();
            latency.stamp(&mut traces);
            let summary =
                Summary::from_traces(&hash, &traces, &latency, &cfg.cost, world.private_tokens);
            write_reports(&out_dir, "edge", &summary, &traces)?;
            println!("{}", world.vocab.decode(report.generated()));
        }
        Command::Bench { sessions } => {
            let world = load_world(&cfg, Side::Both)?;
            let models = world.models()?;
            let prompt = world.encode_prompt(&cfg.run.prompt)?;
            let root = SessionRng::new(cfg.protocol.seed);
            let started = Instant::now();
            let mut tokens = 0usize;
            let mut traces = Vec::new();
            for i in 0..sessions {
                let mut p = cfg.protocol.clone();
                p.seed = root.split(i as u64).seed();
                let out = run_session(&p, &models, &prompt, &world.vocab)?;
                tokens += out.generated().len();
                traces.extend(out.traces);
            }
            let elapsed = started.elapsed();
            let latency = cfg.latency_model();
            let modeled =
                latency.speedup(&traces, specsteer::metrics::Baseline::LlmAutoregressive)?;
            println!("sessions={sessions} tokens={tokens} elapsed={elapsed:.2?}");
            println!(
                "measured tokens/s = {:.0}",
                tokens as f64 / elapsed.as_secs_f64()
            );
            println!("modeled speedup vs generalist = {modeled:.3}");
        }
    }
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.4}"))
}
