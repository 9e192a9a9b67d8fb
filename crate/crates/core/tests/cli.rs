use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const EXAMPLE1: &str = r#"{
  "num_states": 1,
  "num_actions": 1,
  "gamma": 0.5,
  "transition": [[[1.0]]],
  "rewards": [[{"type": "bernoulli", "q": 0.5}]]
}
"#;

fn distrl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_distrl"))
        .args(args)
        .env("DISTRL_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn column(path: &Path, name: &str) -> Vec<String> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let idx = reader.headers().unwrap().iter().position(|h| h == name).unwrap();
    reader.records().map(|r| r.unwrap()[idx].to_string()).collect()
}

fn floats(path: &Path, name: &str) -> Vec<f64> {
    column(path, name).iter().map(|v| v.parse().unwrap()).collect()
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn validate_accepts_a_well_formed_model() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "ex1.json", EXAMPLE1);
    let out = distrl(&["validate", s(&path)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("valid"));
}

#[test]
fn validate_names_the_bad_row() {
    let dir = TempDir::new().unwrap();
    let text = r#"{
  "num_states": 2, "num_actions": 2, "gamma": 0.9,
  "transition": [[[0.5, 0.5], [1.0, 0.0]], [[0.2, 0.8], [0.4, 0.5]]],
  "rewards": [[{"type": "dirac", "c": 0.1}, {"type": "dirac", "c": 0.2}],
              [{"type": "bernoulli", "q": 0.3}, {"type": "dirac", "c": 1.0}]]
}"#;
    let path = write(dir.path(), "bad.json", text);
    let out = distrl(&["validate", "--mdp", s(&path)]);
    assert!(!out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("(s=1, a=1)"), "{stdout}");
}

#[test]
fn validate_rejects_unit_discount() {
    let dir = TempDir::new().unwrap();
    let path = write(
        dir.path(),
        "g1.json",
        &EXAMPLE1.replace("0.5,\n  \"transition", "1.0,\n  \"transition"),
    );
    let out = distrl(&["validate", s(&path)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("gamma"));
}

#[test]
fn validate_reports_parse_errors() {
    let dir = TempDir::new().unwrap();
    let path = write(dir.path(), "broken.json", "{\"num_states\": 1,");
    let out = distrl(&["validate", s(&path)]);
    assert!(!out.status.success());
}

#[test]
fn ddp_reaches_the_uniform_law() {
    let dir = TempDir::new().unwrap();
    let mdp = write(dir.path(), "ex1.json", EXAMPLE1);
    let out_dir = dir.path().join("out");
    let out = distrl(&[
        "ddp",
        "--mdp",
        s(&mdp),
        "--grid-k",
        "500",
        "--ddp-tol",
        "1e-10",
        "--reference-uniform",
        "0,2",
        "--out",
        s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("converged"));
    let delta = 1.0 / (501.0 * 0.5);
    let distances = floats(&out_dir.join("ddp_trace.csv"), "w1_to_reference");
    assert!(*distances.last().unwrap() <= 2.0 * delta + 1e-10 / 0.5);
    let weights = floats(&out_dir.join("fixed_point.csv"), "weight");
    assert_eq!(weights.len(), 501);
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for name in ["fixed_point", "ddp_trace"] {
        let meta: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(out_dir.join(format!("{name}.meta.json"))).unwrap()).unwrap();
        assert_eq!(meta["command"], "ddp");
        assert_eq!(meta["config"]["grid_k"], 500);
    }
}

#[test]
fn ddp_flags_an_iteration_cap() {
    let dir = TempDir::new().unwrap();
    let mdp = write(dir.path(), "ex1.json", EXAMPLE1);
    let out_dir = dir.path().join("out");
    let out = distrl(&["ddp", "--mdp", s(&mdp), "--max-iters", "1", "--out", s(&out_dir)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("incomplete"));
    assert_eq!(column(&out_dir.join("ddp_trace.csv"), "iteration").len(), 1);
}

#[test]
fn runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = distrl(&[
            "convergence",
            "--random",
            "3,2,0.8,7",
            "--grid-k",
            "60",
            "--n",
            "20,80",
            "--reps",
            "3",
            "--seed",
            "11",
            "--out",
            s(&out_dir),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let (a, b) = (run("a"), run("b"));
    for name in [
        "convergence.csv",
        "convergence_summary.csv",
        "convergence_slopes.csv",
        "convergence_traces.csv",
    ] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name}"
        );
        assert!(a.join(name.replace(".csv", ".meta.json")).exists());
    }
}

#[test]
fn infinite_sample_size_recovers_the_truth() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("out");
    let out = distrl(&[
        "convergence",
        "--random",
        "4,2,0.9,3",
        "--grid-k",
        "100",
        "--n",
        "inf",
        "--out",
        s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let path = out_dir.join("convergence.csv");
    let delta = 1.0 / (101.0 * 0.1);
    assert_eq!(column(&path, "n"), vec!["inf"; 3]);
    for e in floats(&path, "sup_state_error") {
        assert!(e <= 2.0 * delta, "{e}");
    }
}

#[test]
fn small_coverage_run_writes_summaries() {
    let dir = TempDir::new().unwrap();
    let config = write(
        dir.path(),
        "cov.json",
        &format!(
            r#"{{"mdp": {{"random": {{"states": 3, "actions": 2, "gamma": 0.7, "seed": 5}}}},
               "grid_k": 50, "n": [200], "reps": 4, "mc_draws": 200, "seed": 2, "out": {:?}}}"#,
            dir.path().join("out")
        ),
    );
    let out = distrl(&["coverage", "--config", s(&config)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary = dir.path().join("out/coverage_summary.csv");
    let targets = column(&summary, "target");
    assert_eq!(targets.len(), 6);
    for c in floats(&summary, "coverage") {
        assert!((0.0..=1.0).contains(&c));
    }
    assert_eq!(column(&dir.path().join("out/coverage.csv"), "replicate").len(), 24);
    assert!(dir.path().join("out/coverage.meta.json").exists());
    assert!(dir.path().join("out/coverage_summary.meta.json").exists());
}

#[test]
fn bad_configs_are_rejected() {
    let dir = TempDir::new().unwrap();
    let unknown = write(dir.path(), "unknown.json", r#"{"grid_kk": 10}"#);
    assert_eq!(distrl(&["ddp", "--config", s(&unknown)]).status.code(), Some(2));
    let out = distrl(&["coverage", "--random", "2,2,0.9,0", "--alpha", "1.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let out = distrl(&["coverage", "--random", "2,2,0.9,0", "--n", "inf"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!distrl(&["ddp", "--random", "2,2"]).status.success());
}
