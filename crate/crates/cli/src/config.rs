//! Run settings: command-line flags merged over an optional JSON file, then
//! resolved against the data into a fully explicit echo.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use qpsurrogate::analysis::{AnalysisConfig, JitterSpec};
use qpsurrogate::grid::DEFAULT_OVERSAMPLE;
use qpsurrogate::jitter::DEFAULT_NODES;
use qpsurrogate::linear::PriorMode;
use qpsurrogate::priors::{JitterPrior, JitterPriorKind, PriorConfig, PriorOverrides};
use qpsurrogate::scan::{ScanConfig, DEFAULT_EPSILON, DEFAULT_MEMORY_CEILING, DEFAULT_STOP_RATIO};
use qpsurrogate::timeseries::Format;
use qpsurrogate::{SeriesKind, TimeSeries};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Csv,
    Json,
}

impl InputFormat {
    pub fn for_path(path: &Path) -> Self {
        match Format::from_path(path) {
            Format::Csv => InputFormat::Csv,
            Format::Json => InputFormat::Json,
        }
    }

    pub fn core(self) -> Format {
        match self {
            InputFormat::Csv => Format::Csv,
            InputFormat::Json => Format::Json,
        }
    }
}

pub fn parse_kind(s: &str) -> Result<SeriesKind, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_")))
        .map_err(|_| format!("unknown series kind '{s}' (expected doppler, transit_timing or generic)"))
}

/// Settings of `analyze`. Every field is optional on input; after
/// resolution every applicable field is set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSettings {
    pub input: Option<PathBuf>,
    pub format: Option<InputFormat>,
    pub kind: Option<SeriesKind>,
    pub f_min: Option<f64>,
    pub f_max: Option<f64>,
    pub nf_max: Option<usize>,
    pub nd_min: Option<usize>,
    pub nd_max: Option<usize>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub a0: Option<f64>,
    pub a_max: Option<f64>,
    pub b0: Option<f64>,
    pub b_max: Option<f64>,
    pub jitter_min: Option<f64>,
    pub jitter_prior: Option<JitterPriorKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jitter_cutoff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub jitter_scale: Option<f64>,
    pub jitter_nodes: Option<usize>,
    pub oversample: Option<f64>,
    pub epsilon: Option<f64>,
    pub stop_ratio: Option<f64>,
    pub memory_ceiling: Option<usize>,
    pub exact_2d: Option<bool>,
    pub summaries: Option<usize>,
    pub seed: Option<u64>,
    /// Not part of the echo: the thread count never changes results beyond
    /// rounding.
    #[serde(skip_serializing)]
    pub threads: Option<usize>,
}

macro_rules! merge_fields {
    ($a:expr, $b:expr, $($f:ident),*) => {
        AnalyzeSettings { $($f: $a.$f.or($b.$f)),* }
    };
}

impl AnalyzeSettings {
    /// Field-wise merge; values in `self` win.
    pub fn or(self, other: AnalyzeSettings) -> AnalyzeSettings {
        merge_fields!(
            self, other, input, format, kind, f_min, f_max, nf_max, nd_min, nd_max, alpha, beta, a0, a_max, b0, b_max,
            jitter_min, jitter_prior, jitter_cutoff, jitter_scale, jitter_nodes, oversample, epsilon, stop_ratio,
            memory_ceiling, exact_2d, summaries, seed, threads
        )
    }

    pub fn prior_overrides(&self) -> PriorOverrides {
        PriorOverrides {
            alpha: self.alpha,
            beta: self.beta,
            nf_max: self.nf_max,
            nd_min: self.nd_min,
            nd_max: self.nd_max,
            a0: self.a0,
            a_max: self.a_max,
            b0: self.b0,
            b_max: self.b_max,
            f_min: self.f_min,
            f_max: self.f_max,
            jitter_min: self.jitter_min,
            jitter_prior: self.jitter_prior,
            jitter_cutoff: self.jitter_cutoff,
            jitter_scale: self.jitter_scale,
        }
    }

    /// Checks that need no data.
    pub fn precheck(&self) -> CliResult<()> {
        if self.input.is_none() {
            return Err(CliError::Config("an input file is required (--input)".into()));
        }
        if self.f_max.is_none() {
            return Err(CliError::Config("f_max is required (--f-max)".into()));
        }
        Ok(())
    }

    pub fn format(&self) -> InputFormat {
        self.format
            .unwrap_or_else(|| self.input.as_deref().map_or(InputFormat::Csv, InputFormat::for_path))
    }

    /// Resolve data-driven defaults. Returns the explicit echo together with
    /// the prior and analysis configurations it describes.
    pub fn resolve(&self, ts: &TimeSeries) -> CliResult<(AnalyzeSettings, PriorConfig, AnalysisConfig)> {
        let priors = self.prior_overrides().resolve(ts)?;
        let scan = ScanConfig {
            oversample: self.oversample.unwrap_or(DEFAULT_OVERSAMPLE),
            epsilon: self.epsilon.unwrap_or(DEFAULT_EPSILON),
            memory_ceiling: self.memory_ceiling.unwrap_or(DEFAULT_MEMORY_CEILING),
            exact_2d_base: self.exact_2d.unwrap_or(false),
            ..ScanConfig::default()
        };
        let nodes = self.jitter_nodes.unwrap_or(DEFAULT_NODES);
        let analysis = AnalysisConfig {
            scan,
            stop_ratio: self.stop_ratio.unwrap_or(DEFAULT_STOP_RATIO),
            jitter: JitterSpec::TrapezoidLog { nodes },
            prior_mode: PriorMode::Proper,
            summaries: self.summaries.unwrap_or(5),
        };
        let (jitter_prior, jitter_cutoff, jitter_scale) = match priors.jitter_prior {
            JitterPrior::ModifiedJeffreys => (JitterPriorKind::Mjeff, None, None),
            JitterPrior::Cutoff { cutoff } => (JitterPriorKind::Cutoff, Some(cutoff), None),
            JitterPrior::HalfNormal { scale } => (JitterPriorKind::Halfnormal, None, Some(scale)),
        };
        let echo = AnalyzeSettings {
            input: self.input.clone(),
            format: Some(self.format()),
            kind: Some(ts.kind()),
            f_min: Some(priors.f_min),
            f_max: Some(priors.f_max),
            nf_max: Some(priors.nf_max),
            nd_min: Some(priors.nd_min),
            nd_max: Some(priors.nd_max),
            alpha: Some(priors.alpha),
            beta: Some(priors.beta),
            a0: Some(priors.a0),
            a_max: Some(priors.a_max),
            b0: Some(priors.b0),
            b_max: Some(priors.b_max),
            jitter_min: Some(priors.jitter_min),
            jitter_prior: Some(jitter_prior),
            jitter_cutoff,
            jitter_scale,
            jitter_nodes: Some(nodes),
            oversample: Some(scan.oversample),
            epsilon: Some(scan.epsilon),
            stop_ratio: Some(analysis.stop_ratio),
            memory_ceiling: Some(scan.memory_ceiling),
            exact_2d: Some(scan.exact_2d_base),
            summaries: Some(analysis.summaries),
            seed: Some(self.seed.unwrap_or(0)),
            threads: None,
        };
        Ok((echo, priors, analysis))
    }
}

/// Read a JSON settings file. A file with a top-level `config` object (such
/// as a previous `posterior.json`) contributes that object.
pub fn load_config_file<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))?;
    if let Some(inner) = value.get_mut("config").filter(|v| v.is_object()) {
        value = inner.take();
    }
    serde_json::from_value(value).map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))
}
