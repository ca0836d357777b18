use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use qpsurrogate::analysis::{analyze_with_progress, Analysis, Progress};
use qpsurrogate::par::Executor;
use qpsurrogate::priors::{prior_nd, prior_nf};
use qpsurrogate::timeseries::load_timeseries;
use qpsurrogate::SeriesKind;

use crate::config::AnalyzeSettings;
use crate::error::{CliError, CliResult};
use crate::output::{config_hash, csv_with_hash, sha256_hex, to_json_bytes, unix_timestamp, OutputSet};

pub struct AnalyzeRun {
    pub settings: AnalyzeSettings,
    pub output_dir: PathBuf,
    pub progress: bool,
}

pub fn cmd_analyze(run: &AnalyzeRun) -> CliResult<Vec<PathBuf>> {
    let settings = &run.settings;
    settings.precheck()?;
    let input = settings.input.clone().expect("checked by precheck");
    let bytes = std::fs::read(&input).map_err(|e| CliError::io(&input, e))?;
    let digest = sha256_hex(&bytes);
    let ts = load_timeseries(&input, settings.format().core(), settings.kind.unwrap_or(SeriesKind::Generic))?;
    let (echo, priors, config) = settings.resolve(&ts)?;
    let exec = Executor::new(settings.threads.unwrap_or(0))?;

    let report = |p: Progress| {
        eprintln!(
            "scan nf={} nd={}: {} evaluations in {:.2}s, log evidence {:.4}",
            p.nf, p.nd, p.evaluations, p.seconds, p.log_evidence
        );
    };
    let progress: Option<&dyn Fn(Progress)> = if run.progress { Some(&report) } else { None };
    let analysis = analyze_with_progress(&ts, &priors, &config, &exec, progress)?;

    let config_value = serde_json::to_value(&echo).expect("settings serialize");
    let hash = config_hash(&json!({ "config": config_value, "input_sha256": digest }));

    let mut out = OutputSet::new();
    let mut files = Vec::new();
    for m in &analysis.marginals {
        let name = format!("marginal_{}.csv", m.nf);
        out.add(run.output_dir.join(&name), marginal_csv(&hash, m));
        files.push(name);
    }
    if let Some(d) = &analysis.delta {
        let rows = d
            .mass
            .iter()
            .enumerate()
            .map(|(i, m)| format!("{},{},{}", d.k_min + i as i64, d.delta(i), m));
        out.add(run.output_dir.join("delta.csv"), csv_with_hash(&hash, "k,delta,mass", rows));
        files.push("delta.csv".into());
    }
    let density = analysis.jitter.density();
    let rows = (0..analysis.jitter.sigma.len())
        .map(|i| format!("{},{},{}", analysis.jitter.sigma[i], analysis.jitter.mass[i], density[i]));
    out.add(run.output_dir.join("jitter.csv"), csv_with_hash(&hash, "sigma_j,mass,density", rows));
    files.push("jitter.csv".into());

    let doc = posterior_json(&analysis, &input, &digest, &hash, config_value, &files, exec.threads());
    out.add(run.output_dir.join("posterior.json"), to_json_bytes(&doc));
    out.commit()
}

fn marginal_csv(hash: &str, m: &qpsurrogate::analysis::FrequencyMarginals) -> String {
    let grid = m.densities[0].grid;
    let mut header = String::from("node,frequency,period");
    for i in 1..=m.nf {
        header.push_str(&format!(",mass_{i},density_{i}"));
    }
    let rows = (0..grid.count).map(|n| {
        let f = grid.freq(n);
        let mut row = format!("{n},{f},{}", 1.0 / f);
        for d in &m.densities {
            row.push_str(&format!(",{},{}", d.mass[n], d.mass[n] / grid.step));
        }
        row
    });
    csv_with_hash(hash, &header, rows)
}

fn posterior_json(
    a: &Analysis,
    input: &Path,
    digest: &str,
    hash: &str,
    config: Value,
    files: &[String],
    threads: usize,
) -> Value {
    let p = &a.priors;
    let scans: Vec<Value> = a
        .scans
        .iter()
        .map(|s| {
            json!({
                "nf": s.nf,
                "nd": s.nd,
                "log_evidence": s.log_total,
                "tuples": s.len(),
                "retained": s.retained.len(),
                "retained_mass": s.retained_mass(),
                "evaluations": s.evaluations,
                "skipped": s.skipped,
            })
        })
        .collect();
    let b21 = a.posterior.bayes_factors.iter().find(|b| b.n == 1).map(|b| b.log_value);
    json!({
        "config_hash": hash,
        "config": config,
        "input": {
            "path": input,
            "sha256": digest,
            "n_obs": a.n_obs,
            "offset": a.offset,
        },
        "priors": p,
        "prior_normalization": {
            "p_nf": (0..=p.nf_max).map(|n| prior_nf(n, p)).collect::<Vec<_>>(),
            "p_nd": (p.nd_min..=p.nd_max).map(|n| prior_nd(n, p)).collect::<Vec<_>>(),
            "frequency_weights": "exact log-uniform prior mass of each grid cell",
            "frequency_tuples": "ordered tuples weighted by nf! times the product of cell masses",
            "jitter_nodes": a.jitter.sigma.len(),
            "jitter_floor_mass": a.jitter_floor_mass,
        },
        "grid": a.grid,
        "models": a.posterior,
        "log_b21": b21,
        "map": { "nf": a.posterior.map_model.0, "nd": a.posterior.map_model.1 },
        "nf_stop": a.posterior.nf_stop,
        "truncation_warning": a.posterior.truncation_warning,
        "scans": scans,
        "summaries": a.summaries,
        "jitter": {
            "mean": a.jitter.mean(),
            "mode": a.jitter.mode(),
        },
        "delta": a.delta.as_ref().map(|d| json!({ "mode": d.mode(), "total": d.total() })),
        "files": files,
        "run": {
            "timestamp": unix_timestamp(),
            "threads": threads,
            "timings": a.timings,
        },
    })
}
