use std::path::PathBuf;

use serde_json::{json, Value};

use qpsurrogate::compare::{b21_crosses_one, SensitivityRow};

use crate::error::{CliError, CliResult};
use crate::output::{to_json_bytes, OutputSet};

#[derive(Debug, Clone, Default)]
pub struct CompareFlags {
    pub posteriors: Vec<PathBuf>,
    pub labels: Vec<String>,
    pub output_dir: Option<PathBuf>,
}

/// Read `posterior.json` files and report `log B_{2,1}` for each, flagging
/// whether the Bayes factor lies on both sides of 1 across them.
pub fn cmd_compare(flags: &CompareFlags) -> CliResult<Value> {
    if flags.posteriors.is_empty() {
        return Err(CliError::Config("compare needs at least one posterior.json".into()));
    }
    if !flags.labels.is_empty() && flags.labels.len() != flags.posteriors.len() {
        return Err(CliError::Config(format!(
            "{} labels given for {} posteriors",
            flags.labels.len(),
            flags.posteriors.len()
        )));
    }
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for (i, path) in flags.posteriors.iter().enumerate() {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| CliError::Malformed {
            what: path.display().to_string(),
            msg: e.to_string(),
        })?;
        let label = flags.labels.get(i).cloned().unwrap_or_else(|| {
            doc["config"]["jitter_prior"]
                .as_str()
                .map(|j| format!("{} ({j})", path.display()))
                .unwrap_or_else(|| path.display().to_string())
        });
        let log_b21 = doc["log_b21"].as_f64();
        rows.push(SensitivityRow {
            label: label.clone(),
            log_b21,
        });
        entries.push(json!({
            "label": label,
            "path": path,
            "config_hash": doc["config_hash"],
            "jitter_prior": doc["config"]["jitter_prior"],
            "log_b21": log_b21,
            "map": doc["map"],
            "nf_posterior": doc["models"]["nf_posterior"],
        }));
    }
    let report = json!({
        "runs": entries,
        "b21_crosses_one": b21_crosses_one(&rows),
    });
    if let Some(dir) = &flags.output_dir {
        let mut out = OutputSet::new();
        out.add(dir.join("compare.json"), to_json_bytes(&report));
        out.commit()?;
    }
    Ok(report)
}
