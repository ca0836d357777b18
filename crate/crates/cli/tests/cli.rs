use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use qpsurrogate::simulate::GroundBased;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qpsurrogate"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("error on stderr");
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not JSON: {line}"))
}

/// Strong sinusoid at random times, written through `simulate --config`.
fn strong_signal(dir: &Path, seed: u64) -> PathBuf {
    let cfg = dir.join("sim.json");
    let doc = json!({
        "signal": {
            "sinusoids": [{ "frequency": 0.137, "amplitude": 10.0, "phase": 0.4 }],
            "noise": { "type": "constant", "sigma": 1.0 }
        },
        "cadence": { "mode": "random_uniform", "n_obs": 40, "span": 100.0 },
        "seed": seed
    });
    fs::write(&cfg, doc.to_string()).unwrap();
    let data = dir.join("data.csv");
    ok(&["simulate", "--config", s(&cfg), "--output", s(&data)]);
    data
}

fn analyze(input: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["analyze", "--input", s(input), "--output-dir", s(out), "--f-max", "0.3", "--oversample", "4"];
    args.extend_from_slice(extra);
    ok(&args)
}

fn without_run(mut v: Value) -> Value {
    v.as_object_mut().unwrap().remove("run");
    v
}

#[test]
fn missing_f_max_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = strong_signal(dir.path(), 1);
    let out = run(&["analyze", "--input", s(&data), "--output-dir", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = error_json(&out);
    assert_eq!(err["error"], "config");
    assert!(err["message"].as_str().unwrap().contains("--f-max"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn bad_input_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("bad.csv");
    fs::write(&data, "x,y,sigma\n0,1,1\n1,2,0\n2,0,1\n3,1,1\n").unwrap();
    let out = run(&["analyze", "--input", s(&data), "--output-dir", s(&dir.path().join("o")), "--f-max", "0.3"]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_json(&out);
    assert!(err["error"].is_string());
    assert!(err["message"].as_str().unwrap().contains('3'), "{err}");
    assert!(!dir.path().join("o").exists(), "no partial output on failure");
}

#[test]
fn strong_signal_selects_one_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let data = strong_signal(dir.path(), 7);
    let out = dir.path().join("o");
    analyze(&data, &out, &["--threads", "1"]);
    let post = read_json(&out.join("posterior.json"));
    assert_eq!(post["map"]["nf"], 1);
    let f = post["summaries"][0]["sinusoids"][0]["frequency"].as_f64().unwrap();
    assert!((f - 0.137).abs() < 0.005, "{f}");
    assert!(post["run"]["timings"].as_array().unwrap().len() >= 2);
}

#[test]
fn single_thread_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let data = strong_signal(dir.path(), 2);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    analyze(&data, &a, &["--threads", "1"]);
    analyze(&data, &b, &["--threads", "1"]);
    let pa = read_json(&a.join("posterior.json"));
    let pb = read_json(&b.join("posterior.json"));
    assert_eq!(without_run(pa.clone()), without_run(pb));
    for name in pa["files"].as_array().unwrap() {
        let name = name.as_str().unwrap();
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn threaded_run_matches_single_thread() {
    let dir = tempfile::tempdir().unwrap();
    let data = strong_signal(dir.path(), 3);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    analyze(&data, &a, &["--threads", "1"]);
    analyze(&data, &b, &["--threads", "4"]);
    let (pa, pb) = (read_json(&a.join("posterior.json")), read_json(&b.join("posterior.json")));
    assert_eq!(pa["config_hash"], pb["config_hash"]);
    let sa = pa["scans"].as_array().unwrap();
    let sb = pb["scans"].as_array().unwrap();
    assert_eq!(sa.len(), sb.len());
    for (x, y) in sa.iter().zip(sb) {
        let (u, v) = (x["log_evidence"].as_f64().unwrap(), y["log_evidence"].as_f64().unwrap());
        assert!((u - v).abs() < 1e-9, "{u} vs {v}");
    }
}

#[test]
fn every_file_carries_the_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let data = strong_signal(dir.path(), 4);
    let out = dir.path().join("o");
    analyze(&data, &out, &["--threads", "1"]);
    let post = read_json(&out.join("posterior.json"));
    let hash = post["config_hash"].as_str().unwrap().to_owned();
    assert_eq!(hash.len(), 64);
    let files = post["files"].as_array().unwrap();
    assert!(files.iter().any(|f| f == "delta.csv"));
    assert!(files.iter().any(|f| f == "jitter.csv"));
    for name in files {
        let text = fs::read_to_string(out.join(name.as_str().unwrap())).unwrap();
        assert_eq!(text.lines().next().unwrap(), format!("# config_hash={hash}"));
    }
    let truth = read_json(&dir.path().join("data.truth.json"));
    let sim_hash = truth["config_hash"].as_str().unwrap();
    let csv = fs::read_to_string(&data).unwrap();
    assert_eq!(csv.lines().next().unwrap(), format!("# config_hash={sim_hash}"));
}

#[test]
fn stored_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let data = strong_signal(dir.path(), 5);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    analyze(&data, &a, &["--threads", "1", "--nd-max", "0", "--alpha", "0.3"]);
    let stored = a.join("posterior.json");
    ok(&["analyze", "--config", s(&stored), "--output-dir", s(&b), "--threads", "1"]);
    let (pa, pb) = (read_json(&stored), read_json(&b.join("posterior.json")));
    assert_eq!(pa["config_hash"], pb["config_hash"]);
    assert_eq!(without_run(pa.clone()), without_run(pb));
    for name in pa["files"].as_array().unwrap() {
        let name = name.as_str().unwrap();
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn explicit_flags_beat_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = strong_signal(dir.path(), 6);
    let a = dir.path().join("a");
    analyze(&data, &a, &["--threads", "1", "--nd-max", "0"]);
    let b = dir.path().join("b");
    let stored = a.join("posterior.json");
    ok(&["analyze", "--config", s(&stored), "--output-dir", s(&b), "--nf-max", "1"]);
    let pb = read_json(&b.join("posterior.json"));
    assert_eq!(pb["config"]["nf_max"], 1);
    assert_eq!(pb["config"]["nd_max"], 0);
    assert_ne!(pb["config_hash"], read_json(&stored)["config_hash"]);
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for p in [&a, &b] {
        ok(&["simulate", "--output", s(p), "--seed", "11", "--cadence", "random_uniform", "--n-obs", "25"]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let (ta, tb) = (read_json(&dir.path().join("a.truth.json")), read_json(&dir.path().join("b.truth.json")));
    assert_eq!(ta, tb);
    assert_eq!(ta["n_obs"], 25);
    let c = dir.path().join("c.csv");
    ok(&["simulate", "--output", s(&c), "--seed", "12", "--cadence", "random_uniform", "--n-obs", "25"]);
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn simulate_zero_observations_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["simulate", "--output", s(&dir.path().join("x.csv")), "--n-obs", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_json(&out)["error"], "config");
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn ground_based_file_respects_windows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g.json");
    ok(&["simulate", "--output", s(&out), "--cadence", "ground_based", "--n-obs", "120", "--span", "1000", "--seed", "3"]);
    let doc = read_json(&out);
    let truth = read_json(&dir.path().join("g.truth.json"));
    let ground: GroundBased = serde_json::from_value(truth["config"]["cadence"]["ground"].clone()).unwrap();
    let rows = doc["observations"].as_array().unwrap();
    assert_eq!(rows.len(), 120);
    for r in rows {
        let t = r[0].as_f64().unwrap();
        assert!(ground.allows(t), "{t}");
    }
}

#[test]
fn alias_study_with_identical_cadences() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&[
        "alias-study",
        "--output-dir",
        s(&out),
        "--seeds",
        "1",
        "--seed",
        "5",
        "--n-obs",
        "25",
        "--oversample",
        "5",
        "--cadence-b",
        "ground_based",
    ]);
    let summary = read_json(&out.join("alias_summary.json"));
    let pair = &summary["per_seed"][0];
    assert_eq!(pair["a"], pair["b"]);
    assert_eq!(summary["aggregate"]["median_difference"], 0.0);
    let csv = fs::read_to_string(out.join("alias_pairs.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 1);
    let diff: f64 = rows[0].split(',').nth(3).unwrap().parse().unwrap();
    assert_eq!(diff, 0.0);
}

#[test]
fn alias_study_reports_each_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    ok(&["alias-study", "--output-dir", s(&out), "--seeds", "3", "--n-obs", "25", "--oversample", "5"]);
    let summary = read_json(&out.join("alias_summary.json"));
    assert_eq!(summary["per_seed"].as_array().unwrap().len(), 3);
    for key in ["median_overlap_a", "median_overlap_b", "mean_overlap_a", "mean_overlap_b", "median_difference"] {
        assert!(summary["aggregate"][key].is_f64(), "{key}");
    }
    let hash = summary["config_hash"].as_str().unwrap();
    let csv = fs::read_to_string(out.join("alias_pairs.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), format!("# config_hash={hash}"));
    assert_eq!(csv.lines().count(), 2 + 3);
}

#[test]
fn compare_reports_each_posterior() {
    let dir = tempfile::tempdir().unwrap();
    let data = strong_signal(dir.path(), 8);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    analyze(&data, &a, &["--threads", "1", "--jitter-prior", "mjeff"]);
    analyze(&data, &b, &["--threads", "1", "--jitter-prior", "halfnormal"]);
    let out = ok(&[
        "compare",
        s(&a.join("posterior.json")),
        s(&b.join("posterior.json")),
        "--labels",
        "mjeff,halfnormal",
    ]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let runs = report["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 2);
    assert_eq!(runs[0]["label"], "mjeff");
    assert_eq!(runs[1]["jitter_prior"], "halfnormal");
    assert!(runs.iter().all(|r| r["log_b21"].is_f64()));
    assert!(report["b21_crosses_one"].is_boolean());

    let bad = run(&["compare", s(&a.join("posterior.json")), "--labels", "x,y"]);
    assert_eq!(bad.status.code(), Some(2));
}
