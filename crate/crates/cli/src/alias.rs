use std::path::PathBuf;
use std::time::Instant;

use serde_json::json;

use qpsurrogate::par::Executor;
use qpsurrogate::simulate::{AliasPair, AliasSetup, CadenceMode};

use crate::config::load_config_file;
use crate::error::{CliError, CliResult};
use crate::output::{config_hash, csv_with_hash, to_json_bytes, unix_timestamp, OutputSet};

#[derive(Debug, Clone, Default)]
pub struct AliasFlags {
    pub config: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seeds: Option<u64>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub f_max: Option<f64>,
    pub oversample: Option<f64>,
    pub epsilon: Option<f64>,
    pub n_obs: Option<usize>,
    pub span: Option<f64>,
    pub cadence_a: Option<CadenceMode>,
    pub cadence_b: Option<CadenceMode>,
    pub progress: bool,
}

pub fn resolve(flags: &AliasFlags) -> CliResult<AliasSetup> {
    let mut setup: AliasSetup = match &flags.config {
        Some(p) => load_config_file(p)?,
        None => AliasSetup::default(),
    };
    if let Some(f) = flags.f_max {
        setup.priors.f_max = Some(f);
    }
    if let Some(o) = flags.oversample {
        setup.analysis.scan.oversample = o;
    }
    if let Some(e) = flags.epsilon {
        setup.analysis.scan.epsilon = e;
    }
    for c in [&mut setup.cadence_a, &mut setup.cadence_b] {
        if let Some(n) = flags.n_obs {
            c.n_obs = n;
        }
        if let Some(s) = flags.span {
            c.span = s;
        }
    }
    if let Some(m) = flags.cadence_a {
        setup.cadence_a.mode = m;
    }
    if let Some(m) = flags.cadence_b {
        setup.cadence_b.mode = m;
    }
    if setup.priors.f_max.is_none() {
        return Err(CliError::Config("f_max is required (--f-max)".into()));
    }
    setup.signal.validate()?;
    setup.cadence_a.validate()?;
    setup.cadence_b.validate()?;
    Ok(setup)
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn cmd_alias_study(flags: &AliasFlags) -> CliResult<Vec<PathBuf>> {
    let setup = resolve(flags)?;
    let count = flags.seeds.unwrap_or(20);
    if count == 0 {
        return Err(CliError::Config("--seeds must be positive".into()));
    }
    let first = flags.seed.unwrap_or(0);
    let exec = Executor::new(flags.threads.unwrap_or(0))?;
    let started = Instant::now();
    let mut pairs: Vec<AliasPair> = Vec::new();
    for seed in first..first + count {
        let pair = setup.run(seed, &exec)?;
        if flags.progress {
            eprintln!(
                "seed {seed}: overlap a {:.4}, b {:.4} ({:.1}s elapsed)",
                pair.a.overlap,
                pair.b.overlap,
                started.elapsed().as_secs_f64()
            );
        }
        pairs.push(pair);
    }

    let config = json!({ "setup": setup, "seeds": count, "first_seed": first });
    let hash = config_hash(&json!({ "config": config }));
    let rows = pairs.iter().map(|p| {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            p.seed,
            p.a.overlap,
            p.b.overlap,
            p.a.overlap - p.b.overlap,
            p.a.log_b21,
            p.b.log_b21,
            p.a.delta_mode,
            p.b.delta_mode,
            p.a.shortfall,
            p.b.shortfall
        )
    });
    let csv = csv_with_hash(
        &hash,
        "seed,overlap_a,overlap_b,difference,log_b21_a,log_b21_b,delta_mode_a,delta_mode_b,shortfall_a,shortfall_b",
        rows,
    );
    let oa: Vec<f64> = pairs.iter().map(|p| p.a.overlap).collect();
    let ob: Vec<f64> = pairs.iter().map(|p| p.b.overlap).collect();
    let diff: Vec<f64> = oa.iter().zip(&ob).map(|(a, b)| a - b).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let summary = json!({
        "config_hash": hash,
        "config": config,
        "per_seed": pairs,
        "aggregate": {
            "seeds": count,
            "median_overlap_a": median(&oa),
            "median_overlap_b": median(&ob),
            "mean_overlap_a": mean(&oa),
            "mean_overlap_b": mean(&ob),
            "median_difference": median(&diff),
            "a_below_b": diff.iter().filter(|d| **d < 0.0).count(),
        },
        "run": {
            "timestamp": unix_timestamp(),
            "threads": exec.threads(),
            "seconds": started.elapsed().as_secs_f64(),
        },
    });
    let mut out = OutputSet::new();
    out.add(flags.output_dir.join("alias_pairs.csv"), csv);
    out.add(flags.output_dir.join("alias_summary.json"), to_json_bytes(&summary));
    out.commit()
}
