mod common;

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use common::repo_root;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_specsteer"));
    c.env_remove("SPECSTEER_CONFIG").env_remove("SPECSTEER_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

/// The bundled default config rewritten with absolute corpus paths, plus edits.
fn config_in(dir: &Path, edits: &[(&str, &str)]) -> PathBuf {
    let data = repo_root().join("crates/core/data");
    let mut s = std::fs::read_to_string(repo_root().join("configs/default.toml"))
        .unwrap()
        .replace("../crates/core/data", data.to_str().unwrap());
    for (from, to) in edits {
        assert!(s.contains(from), "{from}");
        s = s.replace(from, to);
    }
    let path = dir.join("cfg.toml");
    std::fs::write(&path, s).unwrap();
    path
}

#[test]
fn run_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), &[]);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out_dir = dir.path().join(name);
        let o = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            "3",
            "run",
        ]);
        assert!(o.status.success(), "{}", text(&o.stderr));
        let csv = std::fs::read_to_string(out_dir.join("run_trace.csv")).unwrap();
        let json = std::fs::read_to_string(out_dir.join("run_summary.json")).unwrap();
        assert!(csv.starts_with("# config_hash="));
        assert!(json.contains("\"config_hash\""));
        outputs.push((text(&o.stdout), csv, json));
    }
    assert_eq!(outputs[0], outputs[1]);
    let other = dir.path().join("c");
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        other.to_str().unwrap(),
        "--seed",
        "4",
        "run",
    ]);
    assert!(o.status.success());
    // A different seed changes the config hash even when the text happens to agree.
    assert_ne!(
        std::fs::read_to_string(other.join("run_trace.csv")).unwrap(),
        outputs[0].1
    );
}

#[test]
fn missing_corpus_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), &[("user_alice.txt", "nobody_here.txt")]);
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "run",
    ]);
    assert!(!o.status.success());
    assert!(
        text(&o.stderr).contains("nobody_here.txt"),
        "{}",
        text(&o.stderr)
    );
}

#[test]
fn unknown_keys_and_bad_values_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), &[("seed = 7", "seed = 7\nsede = 8")]);
    let o = run(&["--config", cfg.to_str().unwrap(), "run"]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("sede"), "{}", text(&o.stderr));

    let cfg = config_in(dir.path(), &[]);
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--lambda=-1",
        "run",
    ]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("lambda"), "{}", text(&o.stderr));
}

#[test]
fn oracle_prints_the_worked_example() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = repo_root().join("configs/worked_example.toml");
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "oracle",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let s = text(&o.stdout);
    assert!(s.contains("Z = 0.875000"), "{s}");
    // P* for the middle token: 0.3 * 0.7 / 0.4 / 0.875.
    assert!(
        s.lines()
            .any(|l| l.starts_with("b ") && l.contains("0.600000")),
        "{s}"
    );
    assert_eq!(
        std::fs::read_to_string(dir.path().join("oracle.txt")).unwrap(),
        s
    );
}

#[test]
fn zero_private_weight_gives_zero_reward() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), &[("mu = 0.5", "mu = 0.0")]);
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "oracle",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let s = text(&o.stdout);
    let rows: Vec<&str> = s
        .lines()
        .skip_while(|l| !l.starts_with("token"))
        .skip(1)
        .filter(|l| !l.starts_with('('))
        .collect();
    assert!(!rows.is_empty());
    for row in rows {
        let r: f64 = row.split_whitespace().nth(4).unwrap().parse().unwrap();
        assert_eq!(r, 0.0, "{row}");
    }
}

#[test]
fn sweep_writes_csv_and_charts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(
        dir.path(),
        &[
            ("trials = 200", "trials = 10"),
            ("beta_list = [0.0, 0.5, 1.0, 2.0]", "beta_list = [1.0]"),
        ],
    );
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "sweep",
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    assert!(lines.next().unwrap().starts_with("lambda,beta,"));
    let lambdas: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(lambdas, ["1.0", "0.5", "0.1", "0.01"]);
    for f in ["sweep_alpha.svg", "sweep_speedup.svg"] {
        assert!(std::fs::read_to_string(dir.path().join(f))
            .unwrap()
            .starts_with("<svg"));
    }
}

#[test]
fn edge_and_cloud_processes_agree_with_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), &[]);
    let cfg = cfg.to_str().unwrap();
    let cloud_dir = dir.path().join("cloud");
    let edge_dir = dir.path().join("edge");
    let run_dir = dir.path().join("run");

    let mut cloud = bin()
        .args([
            "--config",
            cfg,
            "--out",
            cloud_dir.to_str().unwrap(),
            "serve-cloud",
            "--bind",
            "127.0.0.1:0",
            "--sessions",
            "1",
        ])
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut err = BufReader::new(cloud.stderr.take().unwrap());
    let mut line = String::new();
    err.read_line(&mut line).unwrap();
    let addr = line
        .trim()
        .strip_prefix("serving on ")
        .unwrap_or_else(|| panic!("{line}"))
        .to_string();

    let edge = run(&[
        "--config",
        cfg,
        "--out",
        edge_dir.to_str().unwrap(),
        "run-edge",
        "--connect",
        &addr,
    ]);
    assert!(edge.status.success(), "{}", text(&edge.stderr));
    assert!(cloud.wait().unwrap().success());

    let local = run(&["--config", cfg, "--out", run_dir.to_str().unwrap(), "run"]);
    assert!(local.status.success());
    assert_eq!(text(&edge.stdout), text(&local.stdout));

    let read = |p: PathBuf| std::fs::read(p).unwrap();
    assert_eq!(
        read(edge_dir.join("edge_uplink.bin")),
        read(cloud_dir.join("cloud_0_uplink.bin"))
    );
    assert_eq!(
        read(edge_dir.join("edge_downlink.bin")),
        read(cloud_dir.join("cloud_0_downlink.bin"))
    );
}

#[test]
fn edge_without_cloud_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config_in(dir.path(), &[]);
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap();
    let o = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "run-edge",
        "--connect",
        &port.to_string(),
    ]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains(&port.to_string()));
}
