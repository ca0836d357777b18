//! End-to-end analysis of one time series.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::compare::{
    assemble_posterior, delta_posterior, summarize_tuple, DeltaDensity, EvidenceCell, GridDensity, ModelPosterior, TupleSummary,
};
use crate::engine::Evaluator;
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::jitter::{log_sum_exp, JitterGrid, JitterPosterior, DEFAULT_NODES};
use crate::linear::PriorMode;
use crate::par::Executor;
use crate::priors::{prior_nd, prior_nf, PriorConfig};
use crate::scan::{scan_0, scan_1d, scan_2d, scan_greedy, ScanConfig, ScanContext, ScanResult, DEFAULT_STOP_RATIO};
use crate::timeseries::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum JitterSpec {
    TrapezoidLog { nodes: usize },
    Adaptive { rel_tol: f64 },
    Fixed { sigma: f64 },
}

impl Default for JitterSpec {
    fn default() -> Self {
        JitterSpec::TrapezoidLog { nodes: DEFAULT_NODES }
    }
}

impl JitterSpec {
    pub fn build(&self, priors: &PriorConfig) -> Result<JitterGrid> {
        match *self {
            JitterSpec::TrapezoidLog { nodes } => JitterGrid::trapezoid_log(priors, nodes),
            JitterSpec::Adaptive { rel_tol } => JitterGrid::adaptive(priors, rel_tol),
            JitterSpec::Fixed { sigma } => Ok(JitterGrid::fixed(sigma)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub scan: ScanConfig,
    pub stop_ratio: f64,
    pub jitter: JitterSpec,
    pub prior_mode: PriorMode,
    /// Tuples of the most probable model summarized in the report.
    pub summaries: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            scan: ScanConfig::default(),
            stop_ratio: DEFAULT_STOP_RATIO,
            jitter: JitterSpec::default(),
            prior_mode: PriorMode::Proper,
            summaries: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanTiming {
    pub nf: usize,
    pub nd: usize,
    pub seconds: f64,
    pub evaluations: usize,
    pub retained: usize,
    pub skipped: usize,
}

/// Progress notification emitted after each `(nf, nd)` scan.
#[derive(Debug, Clone, Copy)]
pub struct Progress {
    pub nf: usize,
    pub nd: usize,
    pub evaluations: usize,
    pub seconds: f64,
    pub log_evidence: f64,
}

/// Frequency marginals of one `N_f`, mixed over `N_d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyMarginals {
    pub nf: usize,
    pub densities: Vec<GridDensity>,
}

#[derive(Debug, Clone)]
pub struct Analysis {
    pub priors: PriorConfig,
    pub config: AnalysisConfig,
    pub grid: FrequencyGrid,
    pub offset: f64,
    pub n_obs: usize,
    pub scans: Vec<ScanResult>,
    pub posterior: ModelPosterior,
    pub timings: Vec<ScanTiming>,
    pub marginals: Vec<FrequencyMarginals>,
    pub delta: Option<DeltaDensity>,
    pub summaries: Vec<TupleSummary>,
    pub jitter: JitterPosterior,
    /// Prior mass of the jitter interval below the lowest node.
    pub jitter_floor_mass: f64,
}

impl Analysis {
    pub fn scan(&self, nf: usize, nd: usize) -> Option<&ScanResult> {
        self.scans.iter().find(|s| s.nf == nf && s.nd == nd)
    }
}

pub fn analyze(ts: &TimeSeries, priors: &PriorConfig, config: &AnalysisConfig, exec: &Executor) -> Result<Analysis> {
    analyze_with_progress(ts, priors, config, exec, None)
}

pub fn analyze_with_progress(
    ts: &TimeSeries,
    priors: &PriorConfig,
    config: &AnalysisConfig,
    exec: &Executor,
    progress: Option<&dyn Fn(Progress)>,
) -> Result<Analysis> {
    priors.validate()?;
    config.scan.validate()?;
    if !(config.stop_ratio > 0.0 && config.stop_ratio < 1.0) {
        return Err(Error::Config(format!("stop ratio must lie in (0, 1), got {}", config.stop_ratio)));
    }
    let (centered, offset) = ts.centered();
    let grid = FrequencyGrid::new(ts.span(), priors.f_min, priors.f_max, config.scan.oversample, config.scan.max_grid_nodes())?;
    let jitter = config.jitter.build(priors)?;
    let evaluator = Evaluator::new(&centered, priors, &jitter, config.prior_mode);
    let ctx = ScanContext::new(grid, priors, evaluator, config.scan)?;

    let nds: Vec<usize> = (priors.nd_min..=priors.nd_max).collect();
    let mut scans: Vec<ScanResult> = Vec::new();
    let mut timings = Vec::new();
    let mut log_nf = Vec::new();
    let mut stop = None;
    for nf in 0..=priors.nf_max {
        let mut level = Vec::with_capacity(nds.len());
        for &nd in &nds {
            let start = Instant::now();
            let scan = match nf {
                0 => scan_0(&ctx, nd)?,
                1 => scan_1d(&ctx, nd, exec)?,
                2 if config.scan.exact_2d_base => scan_2d(&ctx, nd, exec)?,
                _ => {
                    let prev = scans.iter().find(|s| s.nf == nf - 1 && s.nd == nd).expect("previous level");
                    scan_greedy(&ctx, prev, exec)?
                }
            };
            let seconds = start.elapsed().as_secs_f64();
            if let Some(cb) = progress {
                cb(Progress {
                    nf,
                    nd,
                    evaluations: scan.evaluations,
                    seconds,
                    log_evidence: scan.log_total,
                });
            }
            timings.push(ScanTiming {
                nf,
                nd,
                seconds,
                evaluations: scan.evaluations,
                retained: scan.retained.len(),
                skipped: scan.skipped,
            });
            level.push(scan.log_total + prior_nd(nd, priors).ln());
            scans.push(scan);
        }
        log_nf.push(log_sum_exp(&level) + prior_nf(nf, priors).ln());
        if nf >= 1 && log_nf[nf] < config.stop_ratio.ln() + log_sum_exp(&log_nf[..nf]) {
            stop = Some(nf);
            break;
        }
    }
    let (nf_stop, warning) = match stop {
        Some(n) => (n, false),
        None => (priors.nf_max, true),
    };

    let cells: Vec<EvidenceCell> = scans
        .iter()
        .map(|s| EvidenceCell {
            nf: s.nf,
            nd: s.nd,
            log_evidence: Some(s.log_total),
        })
        .collect();
    let posterior = assemble_posterior(&cells, priors, nf_stop, warning)?;

    // Mix per-nd marginals with weights p(nd | nf, data).
    let mut marginals = Vec::new();
    let mut delta = None;
    for nf in 1..=nf_stop {
        let level: Vec<&ScanResult> = scans.iter().filter(|s| s.nf == nf).collect();
        let w = level_weights(&level, priors);
        let densities = (0..nf)
            .map(|i| {
                let mut mass = vec![0.0; grid.count];
                for (s, &wi) in level.iter().zip(&w) {
                    for (m, v) in s.marginal(i, grid.count).into_iter().enumerate() {
                        mass[m] += wi * v;
                    }
                }
                GridDensity::new(grid, mass)
            })
            .collect::<Result<Vec<_>>>()?;
        marginals.push(FrequencyMarginals { nf, densities });
        if nf == 2 {
            let parts = level.iter().map(|s| delta_posterior(s, &grid)).collect::<Result<Vec<_>>>()?;
            delta = Some(mix_delta(&parts, &w));
        }
    }

    let (map_nf, map_nd) = posterior.map_model;
    let map_scan = scans.iter().find(|s| s.nf == map_nf && s.nd == map_nd).expect("map model was scanned");
    let mut summaries = Vec::new();
    let mut jitter_post = None;
    for &t in map_scan.retained.iter().take(config.summaries.max(1)) {
        let (summary, jp) = summarize_tuple(&centered, offset, map_scan, t, &grid, priors, &jitter, config.prior_mode)?;
        if jitter_post.is_none() {
            jitter_post = Some(jp);
        }
        summaries.push(summary);
    }
    let jitter_floor_mass = jitter.floor_mass(priors);
    Ok(Analysis {
        priors: priors.clone(),
        config: *config,
        grid,
        offset,
        n_obs: ts.len(),
        scans,
        posterior,
        timings,
        marginals,
        delta,
        summaries,
        jitter: jitter_post.expect("at least one summary"),
        jitter_floor_mass,
    })
}

fn level_weights(level: &[&ScanResult], priors: &PriorConfig) -> Vec<f64> {
    let logs: Vec<f64> = level.iter().map(|s| s.log_total + prior_nd(s.nd, priors).ln()).collect();
    let total = log_sum_exp(&logs);
    logs.iter()
        .map(|l| if total.is_finite() { (l - total).exp() } else { 1.0 / level.len() as f64 })
        .collect()
}

fn mix_delta(parts: &[DeltaDensity], weights: &[f64]) -> DeltaDensity {
    let k_min = parts.iter().map(|d| d.k_min).min().unwrap_or(0);
    let k_max = parts.iter().map(|d| d.k_min + d.mass.len() as i64 - 1).max().unwrap_or(0);
    let mut mass = vec![0.0; (k_max - k_min + 1).max(0) as usize];
    for (d, &w) in parts.iter().zip(weights) {
        for (i, &m) in d.mass.iter().enumerate() {
            mass[(d.k_min + i as i64 - k_min) as usize] += w * m;
        }
    }
    DeltaDensity {
        k_min,
        f_min: parts[0].f_min,
        step: parts[0].step,
        mass,
    }
}

/// Frequency marginals and `delta` from one- and two-frequency scans alone,
/// mixed over `N_d` with the two-frequency weights.
#[derive(Debug, Clone)]
pub struct TwoFrequency {
    pub grid: FrequencyGrid,
    pub lower: GridDensity,
    pub upper: GridDensity,
    pub delta: DeltaDensity,
    /// `log B_{2,1}` marginalized over `N_d`.
    pub log_b21: f64,
}

pub fn two_frequency(ts: &TimeSeries, priors: &PriorConfig, config: &AnalysisConfig, exec: &Executor) -> Result<TwoFrequency> {
    priors.validate()?;
    let (centered, _) = ts.centered();
    let grid = FrequencyGrid::new(ts.span(), priors.f_min, priors.f_max, config.scan.oversample, config.scan.max_grid_nodes())?;
    let jitter = config.jitter.build(priors)?;
    let evaluator = Evaluator::new(&centered, priors, &jitter, config.prior_mode);
    let ctx = ScanContext::new(grid, priors, evaluator, config.scan)?;
    let mut ones = Vec::new();
    let mut twos = Vec::new();
    for nd in priors.nd_min..=priors.nd_max {
        let one = scan_1d(&ctx, nd, exec)?;
        let two = if config.scan.exact_2d_base { scan_2d(&ctx, nd, exec)? } else { scan_greedy(&ctx, &one, exec)? };
        ones.push(one);
        twos.push(two);
    }
    let level_one: Vec<&ScanResult> = ones.iter().collect();
    let level_two: Vec<&ScanResult> = twos.iter().collect();
    let w = level_weights(&level_two, priors);
    let mix = |i: usize| {
        let mut mass = vec![0.0; grid.count];
        for (s, &wi) in level_two.iter().zip(&w) {
            for (m, v) in s.marginal(i, grid.count).into_iter().enumerate() {
                mass[m] += wi * v;
            }
        }
        GridDensity::new(grid, mass)
    };
    let parts = level_two.iter().map(|s| delta_posterior(s, &grid)).collect::<Result<Vec<_>>>()?;
    let lnd = |s: &&ScanResult| s.log_total + prior_nd(s.nd, priors).ln();
    let log_b21 = log_sum_exp(&level_two.iter().map(lnd).collect::<Vec<_>>()) + prior_nf(2, priors).ln()
        - log_sum_exp(&level_one.iter().map(lnd).collect::<Vec<_>>())
        - prior_nf(1, priors).ln();
    Ok(TwoFrequency {
        grid,
        lower: mix(0)?,
        upper: mix(1)?,
        delta: mix_delta(&parts, &w),
        log_b21,
    })
}
