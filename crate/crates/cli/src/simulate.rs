use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use qpsurrogate::simulate::{simulate, AliasSetup, CadenceMode, CadenceSpec, NoiseSpec, SignalSpec};

use crate::config::{load_config_file, InputFormat};
use crate::error::CliResult;
use crate::output::{config_hash, to_json_bytes, OutputSet};

/// Contents of a `simulate --config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSettings {
    pub signal: Option<SignalSpec>,
    pub cadence: Option<CadenceSpec>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct SimulateFlags {
    pub config: Option<PathBuf>,
    pub output: PathBuf,
    pub format: Option<InputFormat>,
    pub seed: Option<u64>,
    pub n_obs: Option<usize>,
    pub span: Option<f64>,
    pub start: Option<f64>,
    pub cadence: Option<CadenceMode>,
    pub sigma: Option<f64>,
    pub jitter: Option<f64>,
}

/// Sidecar path: `data.csv` becomes `data.truth.json`.
pub fn truth_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.truth.json"))
}

pub fn resolve(flags: &SimulateFlags) -> CliResult<SimulateSettings> {
    let file: SimulateSettings = match &flags.config {
        Some(p) => load_config_file(p)?,
        None => SimulateSettings::default(),
    };
    let defaults = AliasSetup::default();
    let mut signal = file.signal.unwrap_or(defaults.signal);
    let mut cadence = file.cadence.unwrap_or(defaults.cadence_a);
    let seed = flags.seed.or(file.seed).unwrap_or(0);
    if let Some(n) = flags.n_obs {
        cadence.n_obs = n;
    }
    if let Some(s) = flags.span {
        cadence.span = s;
    }
    if let Some(s) = flags.start {
        cadence.start = s;
    }
    if let Some(m) = flags.cadence {
        cadence.mode = m;
    }
    if let Some(s) = flags.sigma {
        signal.noise = NoiseSpec::Constant { sigma: s };
    }
    if let Some(j) = flags.jitter {
        signal.jitter = j;
    }
    signal.seed = seed;
    cadence.validate()?;
    signal.validate()?;
    Ok(SimulateSettings {
        signal: Some(signal),
        cadence: Some(cadence),
        seed: Some(seed),
    })
}

pub fn cmd_simulate(flags: &SimulateFlags) -> CliResult<Vec<PathBuf>> {
    let settings = resolve(flags)?;
    let signal = settings.signal.as_ref().expect("resolved");
    let cadence = settings.cadence.as_ref().expect("resolved");
    let seed = settings.seed.expect("resolved");
    let (ts, truth) = simulate(signal, cadence, seed)?;
    let config = serde_json::to_value(&settings).expect("settings serialize");
    let hash = config_hash(&json!({ "config": config }));

    let format = flags.format.unwrap_or_else(|| InputFormat::for_path(&flags.output));
    let data = match format {
        InputFormat::Csv => format!("# config_hash={hash}\n{}", ts.to_csv_string()).into_bytes(),
        InputFormat::Json => {
            let mut doc: serde_json::Value = serde_json::from_str(&ts.to_json_string()).expect("series json");
            doc["config_hash"] = json!(hash);
            to_json_bytes(&doc)
        }
    };
    if truth.shortfall > 0 {
        eprintln!(
            "warning: cadence produced {} of {} requested observations",
            ts.len(),
            cadence.n_obs
        );
    }
    let sidecar = json!({
        "config_hash": hash,
        "config": config,
        "truth": truth,
        "n_obs": ts.len(),
    });
    let mut out = OutputSet::new();
    out.add(&flags.output, data);
    out.add(truth_path(&flags.output), to_json_bytes(&sidecar));
    out.commit()
}

pub fn parse_cadence(s: &str) -> Result<CadenceMode, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown cadence '{s}' (expected uniform, random_uniform or ground_based)"))
}
