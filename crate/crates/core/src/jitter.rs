//! Quadrature over the jitter parameter.
//!
//! The evidence is usually a smooth function of the jitter, so a fixed grid in
//! `log sigma_j` is enough. Each node carries the prior mass it represents;
//! the lowest node also absorbs the mass of `[0, lo]`, where the evidence is
//! flat to good approximation. Large data sets with excess scatter give a peak
//! narrower than the grid spacing; those are detected and the panels around
//! the peak are subdivided.

use crate::error::{Error, Result};
use crate::linear::{fit_linear, laplace_from_fit, DesignMatrix, PriorMode};
use crate::priors::{jitter_cdf, jitter_upper, log_prior_jitter, PriorConfig};
use crate::timeseries::TimeSeries;

pub const DEFAULT_NODES: usize = 48;
pub const MIN_NODES: usize = 16;
/// Refine when the double-step rule moves the log evidence by more than this.
pub const REFINE_TRIGGER: f64 = 0.05;
/// Refined step as a fraction of the peak width in `log sigma_j`; the
/// trapezoid error for a Gaussian peak at this step is around 1e-15.
pub const REFINE_STEP: f64 = 0.75;
const MAX_SUB: usize = 64;
/// Also refine when the peak node's log integrand exceeds a neighbour's by
/// more than this: the peak is then narrower than about two grid steps.
pub const PEAK_DROP: f64 = 2.0;
/// Panels whose endpoints are this far (in log) below the peak are not refined.
const NEGLIGIBLE: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JitterRule {
    TrapezoidLog,
    /// Adaptive Simpson in `log sigma_j` with the given relative tolerance.
    Adaptive { rel_tol: f64 },
    /// No integration: the jitter is held at a single value.
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JitterGrid {
    nodes: Vec<f64>,
    log_weights: Vec<f64>,
    /// `ln(p(s) s)` at each node; the trapezoid density in `log s`.
    log_density: Vec<f64>,
    floor: f64,
    rule: JitterRule,
    lo: f64,
    hi: f64,
}

impl JitterGrid {
    /// Log-spaced trapezoid grid over the prior support.
    pub fn trapezoid_log(priors: &PriorConfig, n: usize) -> Result<Self> {
        if n < MIN_NODES {
            return Err(Error::Config(format!("jitter grid needs at least {MIN_NODES} nodes, got {n}")));
        }
        let (lo, hi) = support(priors)?;
        let (ulo, uhi) = (lo.ln(), hi.ln());
        let h = (uhi - ulo) / (n - 1) as f64;
        let mut nodes = Vec::with_capacity(n);
        let mut log_weights = Vec::with_capacity(n);
        let mut log_density = Vec::with_capacity(n);
        let floor = jitter_cdf(lo, priors);
        for i in 0..n {
            let s = if i + 1 == n { hi } else { (ulo + h * i as f64).exp() };
            let end = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
            let ld = log_prior_jitter(s, priors) + s.ln();
            let mut w = ld.exp() * h * end;
            if i == 0 {
                w += floor;
            }
            nodes.push(s);
            log_weights.push(w.ln());
            log_density.push(ld);
        }
        Ok(Self {
            nodes,
            log_weights,
            log_density,
            floor,
            rule: JitterRule::TrapezoidLog,
            lo,
            hi,
        })
    }

    pub fn default_for(priors: &PriorConfig) -> Result<Self> {
        Self::trapezoid_log(priors, DEFAULT_NODES)
    }

    /// Adaptive rule. The direct route runs adaptive Simpson from the stored
    /// panels; the scan engine bisects the trapezoid down to `rel_tol`.
    pub fn adaptive(priors: &PriorConfig, rel_tol: f64) -> Result<Self> {
        let mut g = Self::trapezoid_log(priors, MIN_NODES)?;
        g.rule = JitterRule::Adaptive { rel_tol };
        Ok(g)
    }

    /// Degenerate grid pinning the jitter to `sigma_j`.
    pub fn fixed(sigma_j: f64) -> Self {
        Self {
            nodes: vec![sigma_j],
            log_weights: vec![0.0],
            log_density: vec![0.0],
            floor: 0.0,
            rule: JitterRule::Fixed,
            lo: sigma_j,
            hi: sigma_j,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn rule(&self) -> JitterRule {
        self.rule
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Prior mass lumped into the lowest node.
    pub fn floor_mass(&self, priors: &PriorConfig) -> f64 {
        match self.rule {
            JitterRule::Fixed => 0.0,
            _ => jitter_cdf(self.lo, priors),
        }
    }

    /// `log int Z(s) p(s) ds` from `log_z`, the unweighted log evidence at
    /// each node. If the double-step rule disagrees with the grid rule, or the
    /// peak is narrower than the grid resolves, the panels near the peak are
    /// subdivided using `eval`, which returns `log Z` at an arbitrary jitter.
    /// Otherwise the plain grid sum is returned.
    pub fn integrate<F>(&self, priors: &PriorConfig, log_z: &[f64], mut eval: F) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let terms: Vec<f64> = log_z.iter().zip(&self.log_weights).map(|(z, w)| z + w).collect();
        let coarse = log_sum_exp(&terms);
        let (trigger, step, min_sub) = match self.rule {
            JitterRule::Fixed => return Ok(coarse),
            JitterRule::TrapezoidLog => (REFINE_TRIGGER, REFINE_STEP, 2),
            // Tighter trigger, finer steps, and always at least 4 sub-panels.
            JitterRule::Adaptive { rel_tol } => (rel_tol, 0.5 * REFINE_STEP, 4),
        };
        if !coarse.is_finite() {
            return Ok(coarse);
        }
        let n = self.nodes.len();
        let reference = log_z
            .iter()
            .zip(&self.log_density)
            .map(|(z, d)| z + d)
            .fold(f64::NEG_INFINITY, f64::max);
        let g: Vec<f64> = log_z
            .iter()
            .zip(&self.log_density)
            .map(|(z, d)| (z + d - reference).exp())
            .collect();
        let u: Vec<f64> = self.nodes.iter().map(|s| s.ln()).collect();
        let h = (u[n - 1] - u[0]) / (n - 1) as f64;
        let floor = self.floor * (log_z[0] - reference).exp();
        let panel = |i: usize, j: usize| 0.5 * (u[j] - u[i]) * (g[i] + g[j]);
        let fine: f64 = (0..n - 1).map(|i| panel(i, i + 1)).sum::<f64>() + floor;
        // Every other node; a leftover last panel keeps the single step.
        let last = if (n - 1).is_multiple_of(2) { n - 1 } else { n - 2 };
        let mut wide: f64 = (0..last).step_by(2).map(|i| panel(i, i + 2)).sum::<f64>() + floor;
        if last < n - 1 {
            wide += panel(n - 2, n - 1);
        }
        let top = (0..n).fold(0, |a, i| if g[i] > g[a] { i } else { a });
        let drop = [top.wrapping_sub(1), top + 1]
            .iter()
            .filter(|&&i| i < n)
            .map(|&i| -g[i].ln())
            .fold(0.0, f64::max);
        if (fine.ln() - wide.ln()).abs() <= trigger && drop <= PEAK_DROP {
            return Ok(coarse);
        }
        // Width of the peak in log sigma from a parabola through the top three
        // nodes; the panels that matter are subdivided to a fraction of it.
        let sub = match (top.checked_sub(1), (top + 1 < n).then_some(top + 1)) {
            (Some(l), Some(r)) => {
                let curv = (g[l].ln() - 2.0 * g[top].ln() + g[r].ln()) / (h * h);
                if curv < 0.0 {
                    (h / (step * (-1.0 / curv).sqrt())).ceil() as usize
                } else {
                    min_sub
                }
            }
            _ => min_sub,
        }
        .clamp(min_sub, MAX_SUB);
        let cutoff = (-NEGLIGIBLE).exp();
        let mut total = floor;
        for i in 0..n - 1 {
            if g[i].max(g[i + 1]) < cutoff {
                total += panel(i, i + 1);
                continue;
            }
            let w = (u[i + 1] - u[i]) / sub as f64;
            let mut inner = 0.5 * (g[i] + g[i + 1]);
            for k in 1..sub {
                let x = u[i] + w * k as f64;
                let s = x.exp();
                inner += (eval(s)? + log_prior_jitter(s, priors) + x - reference).exp();
            }
            total += w * inner;
        }
        Ok(reference + total.ln())
    }
}

fn support(priors: &PriorConfig) -> Result<(f64, f64)> {
    let lo = priors.jitter_min.max(1e-3 * priors.b0);
    let hi = jitter_upper(priors);
    if !(hi > lo) {
        return Err(Error::Config(format!("empty jitter range [{lo}, {hi}]")));
    }
    Ok((lo, hi))
}

/// Numerically stable `log(sum(exp(v)))`, summed in slice order.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn log_z_at(ts: &TimeSeries, design: &DesignMatrix, priors: &PriorConfig, mode: PriorMode, s: f64) -> Result<f64> {
    let fit = fit_linear(ts, design, s)?;
    Ok(laplace_from_fit(&fit, &design.layout(), priors, mode))
}

/// Unweighted log evidence at each grid node.
fn node_log_z(ts: &TimeSeries, design: &DesignMatrix, priors: &PriorConfig, grid: &JitterGrid, mode: PriorMode) -> Result<Vec<f64>> {
    grid.nodes.iter().map(|&s| log_z_at(ts, design, priors, mode, s)).collect()
}

/// `log int Z(sigma_j) p(sigma_j) d sigma_j` for a fixed design.
pub fn marginalize_jitter(
    ts: &TimeSeries,
    design: &DesignMatrix,
    priors: &PriorConfig,
    grid: &JitterGrid,
    mode: PriorMode,
) -> Result<f64> {
    match grid.rule {
        JitterRule::TrapezoidLog | JitterRule::Fixed => {
            let z = node_log_z(ts, design, priors, grid, mode)?;
            grid.integrate(priors, &z, |s| log_z_at(ts, design, priors, mode, s))
        }
        JitterRule::Adaptive { rel_tol } => adaptive(ts, design, priors, grid, mode, rel_tol),
    }
}

fn adaptive(
    ts: &TimeSeries,
    design: &DesignMatrix,
    priors: &PriorConfig,
    grid: &JitterGrid,
    mode: PriorMode,
    rel_tol: f64,
) -> Result<f64> {
    let layout = design.layout();
    let log_z = |s: f64| -> Result<f64> {
        let fit = fit_linear(ts, design, s)?;
        Ok(laplace_from_fit(&fit, &layout, priors, mode))
    };
    // Reference level so the integrand stays O(1).
    let coarse: Vec<f64> = grid.nodes.iter().map(|&s| log_z(s)).collect::<Result<_>>()?;
    let reference = coarse.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if reference == f64::NEG_INFINITY {
        return Ok(reference);
    }
    let integrand = |u: f64| -> Result<f64> {
        let s = u.exp();
        Ok((log_z(s)? - reference + log_prior_jitter(s, priors) + u).exp())
    };
    let (a, b) = (grid.lo.ln(), grid.hi.ln());
    // Start from the coarse panels so a narrow peak is not stepped over.
    let panels = grid.nodes.len() - 1;
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let (x0, x1) = (a + width * p as f64, a + width * (p + 1) as f64);
        let xm = 0.5 * (x0 + x1);
        let (f0, fm, f1) = (integrand(x0)?, integrand(xm)?, integrand(x1)?);
        let whole = (x1 - x0) / 6.0 * (f0 + 4.0 * fm + f1);
        total += simpson(&integrand, x0, x1, f0, fm, f1, whole, rel_tol, 30)?;
    }
    let floor = jitter_cdf(grid.lo, priors) * (coarse[0] - reference).exp();
    Ok(reference + (total + floor).ln())
}

#[allow(clippy::too_many_arguments)]
fn simpson<F: Fn(f64) -> Result<f64>>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm)?, f(rm)?);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let diff = left + right - whole;
    if depth == 0 || diff.abs() <= 15.0 * tol * (left + right).abs().max(1e-300) {
        return Ok(left + right + diff / 15.0);
    }
    Ok(simpson(f, a, m, fa, flm, fm, left, tol, depth - 1)? + simpson(f, m, b, fm, frm, fb, right, tol, depth - 1)?)
}

/// Posterior over the jitter grid nodes, as probability masses.
#[derive(Debug, Clone, PartialEq)]
pub struct JitterPosterior {
    pub sigma: Vec<f64>,
    pub mass: Vec<f64>,
}

impl JitterPosterior {
    pub fn mean(&self) -> f64 {
        self.sigma.iter().zip(&self.mass).map(|(s, m)| s * m).sum()
    }

    pub fn mode(&self) -> f64 {
        let (i, _) = self
            .mass
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &m)| if m > acc.1 { (i, m) } else { acc });
        self.sigma[i]
    }

    /// Convert node masses to a density on the log-spaced grid.
    pub fn density(&self) -> Vec<f64> {
        let n = self.sigma.len();
        (0..n)
            .map(|i| {
                let lo = if i == 0 { self.sigma[0] } else { (self.sigma[i - 1] * self.sigma[i]).sqrt() };
                let hi = if i + 1 == n { self.sigma[i] } else { (self.sigma[i] * self.sigma[i + 1]).sqrt() };
                if hi > lo {
                    self.mass[i] / (hi - lo)
                } else {
                    0.0
                }
            })
            .collect()
    }
}

pub fn posterior_from_terms(nodes: &[f64], terms: &[f64]) -> JitterPosterior {
    let total = log_sum_exp(terms);
    let mass = terms
        .iter()
        .map(|t| if total.is_finite() { (t - total).exp() } else { 0.0 })
        .collect();
    JitterPosterior {
        sigma: nodes.to_vec(),
        mass,
    }
}

pub fn jitter_posterior(
    ts: &TimeSeries,
    design: &DesignMatrix,
    priors: &PriorConfig,
    grid: &JitterGrid,
    mode: PriorMode,
) -> Result<JitterPosterior> {
    let z = node_log_z(ts, design, priors, grid, mode)?;
    let terms: Vec<f64> = z.iter().zip(&grid.log_weights).map(|(z, w)| z + w).collect();
    Ok(posterior_from_terms(&grid.nodes, &terms))
}
