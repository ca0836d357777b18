//! Command-line front end: `analyze`, `simulate`, `alias-study` and `compare`.

pub mod alias;
pub mod analyze;
pub mod compare;
pub mod config;
pub mod error;
pub mod output;
pub mod simulate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use qpsurrogate::priors::JitterPriorKind;
use qpsurrogate::simulate::CadenceMode;
use qpsurrogate::SeriesKind;

use crate::config::{load_config_file, parse_kind, AnalyzeSettings, InputFormat};
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "qpsurrogate", version, about = "Bayesian surrogate periodogram for unevenly sampled series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan frequency models and write posterior tables and marginals.
    Analyze(AnalyzeArgs),
    /// Generate a synthetic series and its ground-truth sidecar.
    Simulate(SimulateArgs),
    /// Paired aliasing study over a batch of seeds.
    AliasStudy(AliasArgs),
    /// Compare B21 across several analyses (e.g. different jitter priors).
    Compare(CompareArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    /// JSON settings file; explicit flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub progress: bool,
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    #[arg(long, value_parser = parse_kind)]
    pub kind: Option<SeriesKind>,
    #[arg(long)]
    pub f_max: Option<f64>,
    #[arg(long)]
    pub f_min: Option<f64>,
    #[arg(long)]
    pub oversample: Option<f64>,
    #[arg(long)]
    pub nf_max: Option<usize>,
    #[arg(long)]
    pub nd_min: Option<usize>,
    #[arg(long)]
    pub nd_max: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub stop_ratio: Option<f64>,
    /// mjeff, cutoff or halfnormal.
    #[arg(long)]
    pub jitter_prior: Option<JitterPriorKind>,
    #[arg(long)]
    pub jitter_cutoff: Option<f64>,
    #[arg(long)]
    pub jitter_scale: Option<f64>,
    #[arg(long)]
    pub jitter_nodes: Option<usize>,
    /// Bytes allowed for stored scan results.
    #[arg(long)]
    pub memory_ceiling: Option<usize>,
    /// Evaluate every frequency pair instead of extending the one-frequency scan.
    #[arg(long)]
    pub exact_2d: bool,
    /// 0 uses every core.
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl AnalyzeArgs {
    pub fn settings(&self) -> CliResult<AnalyzeSettings> {
        let flags = AnalyzeSettings {
            input: self.input.clone(),
            format: self.format,
            kind: self.kind,
            f_min: self.f_min,
            f_max: self.f_max,
            nf_max: self.nf_max,
            nd_min: self.nd_min,
            nd_max: self.nd_max,
            alpha: self.alpha,
            beta: self.beta,
            a0: None,
            a_max: None,
            b0: None,
            b_max: None,
            jitter_min: None,
            jitter_prior: self.jitter_prior,
            jitter_cutoff: self.jitter_cutoff,
            jitter_scale: self.jitter_scale,
            jitter_nodes: self.jitter_nodes,
            oversample: self.oversample,
            epsilon: self.epsilon,
            stop_ratio: self.stop_ratio,
            memory_ceiling: self.memory_ceiling,
            exact_2d: self.exact_2d.then_some(true),
            summaries: None,
            seed: self.seed,
            threads: self.threads,
        };
        let mut merged = match &self.config {
            Some(p) => flags.or(load_config_file(p)?),
            None => flags,
        };
        // A changed prior family makes a stored cutoff or scale meaningless.
        if self.jitter_prior.is_some() {
            merged.jitter_cutoff = self.jitter_cutoff;
            merged.jitter_scale = self.jitter_scale;
        }
        Ok(merged)
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Data file to write (`.csv` or `.json`); the sidecar goes next to it.
    #[arg(long, default_value = "simulated.csv")]
    pub output: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<InputFormat>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_obs: Option<usize>,
    #[arg(long)]
    pub span: Option<f64>,
    #[arg(long)]
    pub start: Option<f64>,
    /// uniform, random_uniform or ground_based.
    #[arg(long, value_parser = simulate::parse_cadence)]
    pub cadence: Option<CadenceMode>,
    /// Constant per-point uncertainty.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub jitter: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AliasArgs {
    #[arg(long, default_value = ".")]
    pub output_dir: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Number of paired seeds.
    #[arg(long)]
    pub seeds: Option<u64>,
    /// First seed of the batch.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub f_max: Option<f64>,
    #[arg(long)]
    pub oversample: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub n_obs: Option<usize>,
    #[arg(long)]
    pub span: Option<f64>,
    #[arg(long, value_parser = simulate::parse_cadence)]
    pub cadence_a: Option<CadenceMode>,
    #[arg(long, value_parser = simulate::parse_cadence)]
    pub cadence_b: Option<CadenceMode>,
    #[arg(long)]
    pub progress: bool,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// posterior.json files written by `analyze`.
    #[arg(required = true)]
    pub posteriors: Vec<PathBuf>,
    /// One label per file.
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Analyze(a) => {
            let run = analyze::AnalyzeRun {
                settings: a.settings()?,
                output_dir: a.output_dir.clone(),
                progress: a.progress,
            };
            for p in analyze::cmd_analyze(&run)? {
                println!("{}", p.display());
            }
        }
        Command::Simulate(s) => {
            let flags = simulate::SimulateFlags {
                config: s.config,
                output: s.output,
                format: s.format,
                seed: s.seed,
                n_obs: s.n_obs,
                span: s.span,
                start: s.start,
                cadence: s.cadence,
                sigma: s.sigma,
                jitter: s.jitter,
            };
            for p in simulate::cmd_simulate(&flags)? {
                println!("{}", p.display());
            }
        }
        Command::AliasStudy(a) => {
            let flags = alias::AliasFlags {
                config: a.config,
                output_dir: a.output_dir,
                seeds: a.seeds,
                seed: a.seed,
                threads: a.threads,
                f_max: a.f_max,
                oversample: a.oversample,
                epsilon: a.epsilon,
                n_obs: a.n_obs,
                span: a.span,
                cadence_a: a.cadence_a,
                cadence_b: a.cadence_b,
                progress: a.progress,
            };
            for p in alias::cmd_alias_study(&flags)? {
                println!("{}", p.display());
            }
        }
        Command::Compare(c) => {
            let flags = compare::CompareFlags {
                posteriors: c.posteriors,
                labels: c.labels,
                output_dir: c.output_dir,
            };
            let report = compare::cmd_compare(&flags)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
    }
    Ok(())
}
