//! Model comparison over `(N_f, N_d)` and derived posterior summaries.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::jitter::{jitter_posterior, log_sum_exp, JitterGrid, JitterPosterior};
use crate::linear::{build_design, fit_linear, uncenter_polynomial, PriorMode};
use crate::priors::{prior_nd, prior_nf, PriorConfig};
use crate::scan::ScanResult;
use crate::timeseries::TimeSeries;

/// Evidence for one `(nf, nd)` cell. `None` marks a model that was never
/// evaluated because the `N_f` sequence was truncated below it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidenceCell {
    pub nf: usize,
    pub nd: usize,
    pub log_evidence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCell {
    pub nf: usize,
    pub nd: usize,
    /// `None` for truncated models.
    pub log_evidence: Option<f64>,
    pub log_prior: f64,
    pub posterior: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesFactor {
    /// Compares `n + 1` against `n` frequencies.
    pub n: usize,
    /// `None` when evaluated across polynomial orders.
    pub nd: Option<usize>,
    pub log_value: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPosterior {
    pub table: Vec<ModelCell>,
    /// `p(N_f = n | data)` for `n = 0..=nf_max`, marginalized over `N_d`.
    pub nf_posterior: Vec<f64>,
    /// `p(N_d = n | data)` indexed from `nd_min`.
    pub nd_posterior: Vec<f64>,
    pub nd_min: usize,
    pub bayes_factors: Vec<BayesFactor>,
    pub bayes_factors_by_nd: Vec<BayesFactor>,
    pub nf_stop: usize,
    pub truncation_warning: bool,
    /// Most probable `(nf, nd)`.
    pub map_model: (usize, usize),
    /// `log sum` of evidence times model prior over the table.
    pub log_total: f64,
}

impl ModelPosterior {
    pub fn cell(&self, nf: usize, nd: usize) -> Option<&ModelCell> {
        self.table.iter().find(|c| c.nf == nf && c.nd == nd)
    }

    pub fn bayes_factor(&self, n: usize) -> Option<f64> {
        self.bayes_factors.iter().find(|b| b.n == n).map(|b| b.value)
    }

    pub fn map_nf(&self) -> usize {
        self.map_model.0
    }
}

/// Normalize `evidence * p(N_f) * p(N_d)` over the evaluated table. Every
/// cell with `nf <= nf_stop` and `nd` in the prior support must be present
/// with an evidence value; cells above `nf_stop` are reported as truncated.
pub fn assemble_posterior(cells: &[EvidenceCell], priors: &PriorConfig, nf_stop: usize, truncation_warning: bool) -> Result<ModelPosterior> {
    let lookup = |nf: usize, nd: usize| cells.iter().find(|c| c.nf == nf && c.nd == nd);
    let mut table = Vec::new();
    let mut joint = Vec::new();
    for nf in 0..=priors.nf_max {
        for nd in priors.nd_min..=priors.nd_max {
            let log_prior = prior_nf(nf, priors).ln() + prior_nd(nd, priors).ln();
            let truncated = nf > nf_stop;
            let log_evidence = if truncated {
                None
            } else {
                match lookup(nf, nd).and_then(|c| c.log_evidence) {
                    Some(v) if !v.is_nan() => Some(v),
                    _ => return Err(Error::MissingModel { nf, nd }),
                }
            };
            joint.push(log_evidence.map_or(f64::NEG_INFINITY, |e| e + log_prior));
            table.push(ModelCell {
                nf,
                nd,
                log_evidence,
                log_prior,
                posterior: 0.0,
                truncated,
            });
        }
    }
    let log_total = log_sum_exp(&joint);
    if !log_total.is_finite() {
        return Err(Error::Config("every evaluated model has zero posterior".into()));
    }
    for (cell, j) in table.iter_mut().zip(&joint) {
        cell.posterior = (j - log_total).exp();
    }

    let nd_count = priors.nd_max - priors.nd_min + 1;
    let log_nf: Vec<f64> = (0..=priors.nf_max)
        .map(|nf| log_sum_exp(&joint[nf * nd_count..(nf + 1) * nd_count]) - log_total)
        .collect();
    let nf_posterior: Vec<f64> = log_nf.iter().map(|l| l.exp()).collect();
    let nd_posterior: Vec<f64> = (0..nd_count)
        .map(|i| (0..=priors.nf_max).map(|nf| table[nf * nd_count + i].posterior).sum())
        .collect();

    let factor = |n: usize, nd: Option<usize>, hi: f64, lo: f64| BayesFactor {
        n,
        nd,
        log_value: hi - lo,
        value: (hi - lo).exp(),
    };
    let mut bayes_factors = Vec::new();
    let mut bayes_factors_by_nd = Vec::new();
    for n in 0..nf_stop.min(priors.nf_max) {
        bayes_factors.push(factor(n, None, log_nf[n + 1], log_nf[n]));
        for i in 0..nd_count {
            bayes_factors_by_nd.push(factor(n, Some(priors.nd_min + i), joint[(n + 1) * nd_count + i], joint[n * nd_count + i]));
        }
    }
    let map = table
        .iter()
        .fold(&table[0], |best, c| if c.posterior > best.posterior { c } else { best });
    Ok(ModelPosterior {
        map_model: (map.nf, map.nd),
        table,
        nf_posterior,
        nd_posterior,
        nd_min: priors.nd_min,
        bayes_factors,
        bayes_factors_by_nd,
        nf_stop,
        truncation_warning,
        log_total,
    })
}

/// `(A, phi)` with `A = sqrt(S^2 + C^2)` and `phi = atan2(-S, C)` in `(-pi, pi]`.
pub fn amplitude_phase(s: f64, c: f64) -> (f64, f64) {
    if s == 0.0 && c == 0.0 {
        return (0.0, 0.0);
    }
    (s.hypot(c), wrap_phase((-s).atan2(c)))
}

/// Map an angle into `(-pi, pi]`.
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi - TAU * ((phi + PI) / TAU).floor();
    if w <= -PI {
        w + TAU
    } else {
        w
    }
}

/// Probability mass per frequency-grid node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub grid: FrequencyGrid,
    pub mass: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: FrequencyGrid, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != grid.count {
            return Err(Error::Binning(format!("{} masses for a grid of {} nodes", mass.len(), grid.count)));
        }
        Ok(Self { grid, mass })
    }

    /// Marginal of the `i`-th ascending frequency of a scan.
    pub fn from_scan(scan: &ScanResult, i: usize, grid: FrequencyGrid) -> Self {
        Self {
            mass: scan.marginal(i, grid.count),
            grid,
        }
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.grid.freqs()
    }

    /// Reciprocal image of the nodes; masses carry over unchanged.
    pub fn periods(&self) -> Vec<f64> {
        self.grid.freqs().into_iter().map(|f| 1.0 / f).collect()
    }

    /// Mass per unit frequency.
    pub fn density(&self) -> Vec<f64> {
        self.mass.iter().map(|m| m / self.grid.step).collect()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Push the density through `f -> factor * f`, rebinning each node to the
    /// nearest grid node. Mass landing outside the grid is dropped.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut mass = vec![0.0; self.grid.count];
        for (m, &p) in self.mass.iter().enumerate() {
            if let Some(t) = self.grid.nearest(factor * self.grid.freq(m)) {
                mass[t] += p;
            }
        }
        Self { grid: self.grid, mass }
    }
}

/// Overlap coefficient `sum min(a_i, b_i)` of two densities on one binning.
pub fn overlap_report(a: &GridDensity, b: &GridDensity) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::Binning("densities are defined on different frequency grids".into()));
    }
    Ok(a.mass.iter().zip(&b.mass).map(|(x, y)| x.min(*y)).sum::<f64>().clamp(0.0, 1.0))
}

/// Posterior of `delta = f2 - 2 f1` binned at grid resolution:
/// `delta_k = -f_min + k * step` with `k = m2 - 2 m1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaDensity {
    pub k_min: i64,
    pub f_min: f64,
    pub step: f64,
    pub mass: Vec<f64>,
}

impl DeltaDensity {
    pub fn delta(&self, i: usize) -> f64 {
        -self.f_min + (self.k_min + i as i64) as f64 * self.step
    }

    pub fn deltas(&self) -> Vec<f64> {
        (0..self.mass.len()).map(|i| self.delta(i)).collect()
    }

    pub fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    pub fn mode(&self) -> f64 {
        let (i, _) = self
            .mass
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
        self.delta(i)
    }

    /// Mass with `|delta - center| <= half_width`.
    pub fn mass_within(&self, center: f64, half_width: f64) -> f64 {
        (0..self.mass.len())
            .filter(|&i| (self.delta(i) - center).abs() <= half_width * (1.0 + 1e-9))
            .map(|i| self.mass[i])
            .sum()
    }
}

pub fn delta_posterior(scan: &ScanResult, grid: &FrequencyGrid) -> Result<DeltaDensity> {
    if scan.nf != 2 {
        return Err(Error::Config(format!("delta posterior needs a two-frequency scan, got {}", scan.nf)));
    }
    let ks: Vec<i64> = (0..scan.len())
        .map(|t| {
            let p = scan.tuple(t);
            p[1] as i64 - 2 * p[0] as i64
        })
        .collect();
    let k_min = ks.iter().copied().min().unwrap_or(0);
    let k_max = ks.iter().copied().max().unwrap_or(0);
    let mut mass = vec![0.0; (k_max - k_min + 1) as usize];
    for (t, k) in ks.iter().enumerate() {
        mass[(k - k_min) as usize] += scan.posterior[t];
    }
    Ok(DeltaDensity {
        k_min,
        f_min: grid.f_min,
        step: grid.step,
        mass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidSummary {
    pub frequency: f64,
    pub period: f64,
    pub amplitude: f64,
    pub amplitude_sd: f64,
    /// Phase of `A cos(2 pi f x + phi)` in the input abscissa.
    pub phase: f64,
    pub phase_sd: f64,
}

/// Laplace summary of one frequency tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TupleSummary {
    pub nodes: Vec<u32>,
    pub posterior: f64,
    pub log_evidence: f64,
    pub jitter_mean: f64,
    pub sinusoids: Vec<SinusoidSummary>,
    /// Polynomial coefficients in the input abscissa, lowest order first.
    pub polynomial: Vec<f64>,
    pub polynomial_sd: Vec<f64>,
}

/// Summarize tuple `t` of `scan`. `centered` is the centered series the scan
/// ran on and `offset` the abscissa shift that was removed.
pub fn summarize_tuple(
    centered: &TimeSeries,
    offset: f64,
    scan: &ScanResult,
    t: usize,
    grid: &FrequencyGrid,
    priors: &PriorConfig,
    jitter: &JitterGrid,
    mode: PriorMode,
) -> Result<(TupleSummary, JitterPosterior)> {
    let nodes = scan.tuple(t).to_vec();
    let freqs: Vec<f64> = nodes.iter().map(|&m| grid.freq(m as usize)).collect();
    let design = build_design(centered, &freqs, scan.nd, 0.0)?;
    let jpost = jitter_posterior(centered, &design, priors, jitter, mode)?;
    let sigma_j = jpost.mean();
    let fit = fit_linear(centered, &design, sigma_j)?;
    let cov = fit.covariance()?;
    let d = fit.dof;
    let var = |i: usize, j: usize| cov[i * d + j];
    let sinusoids = freqs
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let (si, ci) = (2 * i, 2 * i + 1);
            let (s, c) = (fit.coeffs[si], fit.coeffs[ci]);
            let (a, phi) = amplitude_phase(s, c);
            let (amplitude_sd, phase_sd) = if a > 0.0 {
                let ga = [s / a, c / a];
                let gp = [-c / (a * a), s / (a * a)];
                let quad = |g: [f64; 2]| {
                    g[0] * g[0] * var(si, si) + 2.0 * g[0] * g[1] * var(si, ci) + g[1] * g[1] * var(ci, ci)
                };
                (quad(ga).max(0.0).sqrt(), quad(gp).max(0.0).sqrt())
            } else {
                (var(si, si).max(var(ci, ci)).sqrt(), PI)
            };
            SinusoidSummary {
                frequency: f,
                period: 1.0 / f,
                amplitude: a,
                amplitude_sd,
                phase: wrap_phase(phi - TAU * f * offset),
                phase_sd,
            }
        })
        .collect();
    let p0 = 2 * freqs.len();
    let poly = &fit.coeffs[p0..];
    let polynomial = uncenter_polynomial(poly, offset);
    // Uncentering is linear: var(T c) = T cov T^T with T from the unit vectors.
    let np = poly.len();
    let basis: Vec<Vec<f64>> = (0..np)
        .map(|j| {
            let mut e = vec![0.0; np];
            e[j] = 1.0;
            uncenter_polynomial(&e, offset)
        })
        .collect();
    let polynomial_sd = (0..np)
        .map(|k| {
            let mut v = 0.0;
            for a in 0..np {
                for b in 0..np {
                    v += basis[a][k] * basis[b][k] * var(p0 + a, p0 + b);
                }
            }
            v.max(0.0).sqrt()
        })
        .collect();
    Ok((
        TupleSummary {
            nodes,
            posterior: scan.posterior[t],
            log_evidence: scan.log_evidence[t],
            jitter_mean: sigma_j,
            sinusoids,
            polynomial,
            polynomial_sd,
        },
        jpost,
    ))
}

/// Result of varying one setting (e.g. the jitter prior) across analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub label: String,
    pub log_b21: Option<f64>,
}

/// Whether `B_{2,1}` lies on both sides of 1 across the labelled runs.
pub fn b21_crosses_one(rows: &[SensitivityRow]) -> bool {
    let vals: Vec<f64> = rows.iter().filter_map(|r| r.log_b21).collect();
    vals.iter().any(|&v| v > 0.0) && vals.iter().any(|&v| v < 0.0)
}
