//! Brute-force and pruned integration over frequency tuples.
//!
//! Tuples are stored as ascending grid-node indices. The prior over an
//! `n`-frequency tuple is the product of the per-node log-uniform cell masses
//! times `n!`, i.e. a proper density on the ordered simplex `f1 < ... < fn`.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::engine::{Evaluator, Scratch};
use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::jitter::log_sum_exp;
use crate::par::Executor;
use crate::priors::PriorConfig;
use crate::trig::{TrigTable, DEFAULT_RESEED};

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_STOP_RATIO: f64 = 1e-3;
/// Default memory ceiling for stored scan results, in bytes.
pub const DEFAULT_MEMORY_CEILING: usize = 4 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanConfig {
    pub oversample: f64,
    pub epsilon: f64,
    pub reseed: usize,
    /// Tuples whose frequencies lie within this many grid steps of each other
    /// are skipped.
    pub min_separation_steps: usize,
    pub memory_ceiling: usize,
    /// Use a full pairwise scan as the two-frequency level.
    pub exact_2d_base: bool,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            oversample: crate::grid::DEFAULT_OVERSAMPLE,
            epsilon: DEFAULT_EPSILON,
            reseed: DEFAULT_RESEED,
            min_separation_steps: 2,
            memory_ceiling: DEFAULT_MEMORY_CEILING,
            exact_2d_base: false,
        }
    }
}

impl ScanConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1], got {}", self.epsilon)));
        }
        if self.reseed == 0 {
            return Err(Error::Config("reseed interval must be positive".into()));
        }
        Ok(())
    }

    /// Largest grid accepted under the memory ceiling.
    pub fn max_grid_nodes(&self) -> usize {
        self.memory_ceiling / BYTES_PER_NODE
    }
}

const BYTES_PER_NODE: usize = 64;

/// Log evidence over a set of frequency tuples for one `(nf, nd)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub nf: usize,
    pub nd: usize,
    /// Flattened ascending node indices, `nf` per tuple.
    pub tuples: Vec<u32>,
    /// Jitter-marginalized conditional log evidence per tuple.
    pub log_evidence: Vec<f64>,
    /// Log prior mass of each tuple's cell.
    pub log_prior: Vec<f64>,
    /// Normalized posterior over the evaluated tuples.
    pub posterior: Vec<f64>,
    /// `log sum_t Z(t) p(t)`: evidence for this `(nf, nd)`.
    pub log_total: f64,
    /// Tuple indices, by decreasing posterior, covering `1 - epsilon`.
    pub retained: Vec<usize>,
    pub epsilon: f64,
    /// Tuples evaluated explicitly at this level.
    pub evaluations: usize,
    /// Tuples excluded for near-duplicate frequencies or singular designs.
    pub skipped: usize,
}

impl ScanResult {
    fn finish(nf: usize, nd: usize, tuples: Vec<u32>, log_evidence: Vec<f64>, log_prior: Vec<f64>, epsilon: f64, evaluations: usize, skipped: usize) -> Self {
        let joint: Vec<f64> = log_evidence.iter().zip(&log_prior).map(|(e, p)| e + p).collect();
        let log_total = log_sum_exp(&joint);
        let posterior: Vec<f64> = joint
            .iter()
            .map(|j| if log_total.is_finite() { (j - log_total).exp() } else { 0.0 })
            .collect();
        let retained = retained_set(&posterior, epsilon);
        Self {
            nf,
            nd,
            tuples,
            log_evidence,
            log_prior,
            posterior,
            log_total,
            retained,
            epsilon,
            evaluations,
            skipped,
        }
    }

    pub fn len(&self) -> usize {
        self.log_evidence.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_evidence.is_empty()
    }

    pub fn tuple(&self, t: usize) -> &[u32] {
        &self.tuples[t * self.nf..(t + 1) * self.nf]
    }

    pub fn argmax(&self) -> Option<usize> {
        self.retained.first().copied()
    }

    pub fn retained_mass(&self) -> f64 {
        self.retained.iter().map(|&t| self.posterior[t]).sum()
    }

    /// Posterior mass per grid node of the `i`-th (0-based, ascending)
    /// frequency.
    pub fn marginal(&self, i: usize, grid_len: usize) -> Vec<f64> {
        assert!(i < self.nf);
        let mut out = vec![0.0; grid_len];
        for t in 0..self.len() {
            out[self.tuple(t)[i] as usize] += self.posterior[t];
        }
        out
    }
}

/// Smallest prefix of the descending-probability ordering whose mass reaches
/// `1 - epsilon`; never empty when there is any mass.
pub fn retained_set(posterior: &[f64], epsilon: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..posterior.len()).filter(|&i| posterior[i] > 0.0).collect();
    order.sort_by(|&a, &b| posterior[b].total_cmp(&posterior[a]).then(a.cmp(&b)));
    let target = 1.0 - epsilon;
    let mut acc = 0.0;
    let mut keep = 0;
    for &i in &order {
        acc += posterior[i];
        keep += 1;
        if acc >= target {
            break;
        }
    }
    order.truncate(keep.max(1).min(order.len()));
    order
}

/// Everything a scan needs besides the level-specific inputs.
pub struct ScanContext<'a> {
    pub grid: FrequencyGrid,
    pub priors: &'a PriorConfig,
    pub evaluator: Evaluator<'a>,
    pub config: ScanConfig,
    log_cells: Vec<f64>,
}

impl<'a> ScanContext<'a> {
    pub fn new(grid: FrequencyGrid, priors: &'a PriorConfig, evaluator: Evaluator<'a>, config: ScanConfig) -> Result<Self> {
        config.validate()?;
        let log_cells = grid.log_cell_masses(priors);
        Ok(Self {
            grid,
            priors,
            evaluator,
            config,
            log_cells,
        })
    }

    fn log_tuple_prior(&self, tuple: &[u32]) -> f64 {
        let fact: f64 = (2..=tuple.len()).map(|k| (k as f64).ln()).sum();
        fact + tuple.iter().map(|&m| self.log_cells[m as usize]).sum::<f64>()
    }

    fn check_memory(&self, tuples: usize, nf: usize) -> Result<()> {
        let bytes = tuples.saturating_mul(nf * 4 + 3 * 8);
        if bytes > self.config.memory_ceiling {
            return Err(Error::MemoryCeiling(format!(
                "scan over {tuples} tuples needs ~{} MiB (limit {} MiB); lower --oversample, narrow the frequency range or raise --epsilon",
                bytes >> 20,
                self.config.memory_ceiling >> 20
            )));
        }
        Ok(())
    }

    fn chunks(&self) -> usize {
        self.grid.count.div_ceil(self.config.reseed)
    }

    fn too_close(&self, a: u32, b: u32) -> bool {
        (a as i64 - b as i64).unsigned_abs() as usize <= self.config.min_separation_steps
    }

    /// Sweep the new frequency over nodes `[chunk * reseed, ..)` for the given
    /// fixed frequencies, calling `visit(node, log_evidence)` per node that
    /// `accept` admits. Returns the number of singular designs encountered.
    fn sweep<A, V>(&self, base_freqs: &[f64], nd: usize, chunk: usize, accept: A, mut visit: V) -> usize
    where
        A: Fn(u32) -> bool,
        V: FnMut(u32, f64),
    {
        let base = self.evaluator.base(base_freqs, nd);
        let mut scratch = Scratch::new();
        let start = chunk * self.config.reseed;
        let end = ((chunk + 1) * self.config.reseed).min(self.grid.count);
        let mut table = TrigTable::new(self.evaluator.xs(), &self.grid, start, self.config.reseed);
        let mut singular = 0;
        for m in start..end {
            if m > start {
                table.advance();
            }
            let m = m as u32;
            if !accept(m) {
                continue;
            }
            match self.evaluator.eval_pair(&base, table.sin(), table.cos(), &mut scratch) {
                Ok(le) => visit(m, le),
                Err(_) => {
                    singular += 1;
                    visit(m, f64::NEG_INFINITY)
                }
            }
        }
        singular
    }
}

/// Evidence with no sinusoids.
pub fn scan_0(ctx: &ScanContext, nd: usize) -> Result<ScanResult> {
    let base = ctx.evaluator.base(&[], nd);
    let le = ctx.evaluator.eval_base(&base, &mut Scratch::new())?;
    Ok(ScanResult::finish(0, nd, Vec::new(), vec![le], vec![0.0], ctx.config.epsilon, 1, 0))
}

/// One frequency, every grid node.
pub fn scan_1d(ctx: &ScanContext, nd: usize, exec: &Executor) -> Result<ScanResult> {
    let m = ctx.grid.count;
    ctx.check_memory(m, 1)?;
    let parts = exec.map(ctx.chunks(), |c| {
        let mut le = Vec::with_capacity(ctx.config.reseed);
        let singular = ctx.sweep(&[], nd, c, |_| true, |_, v| le.push(v));
        (le, singular)
    });
    let mut log_evidence = Vec::with_capacity(m);
    let mut skipped = 0;
    for (le, s) in parts {
        log_evidence.extend(le);
        skipped += s;
    }
    let tuples: Vec<u32> = (0..m as u32).collect();
    let log_prior = tuples.iter().map(|&t| ctx.log_tuple_prior(&[t])).collect();
    Ok(ScanResult::finish(1, nd, tuples, log_evidence, log_prior, ctx.config.epsilon, m, skipped))
}

/// Two frequencies, every admissible ordered pair.
pub fn scan_2d(ctx: &ScanContext, nd: usize, exec: &Executor) -> Result<ScanResult> {
    let m = ctx.grid.count;
    ctx.check_memory(m * (m - 1) / 2, 2)?;
    let sep = ctx.config.min_separation_steps;
    let rows = exec.map(m, |a| {
        let mut tuples = Vec::new();
        let mut le = Vec::new();
        let mut singular = 0;
        let first = a + sep + 1;
        if first < m {
            let fa = ctx.grid.freq(a);
            for c in first / ctx.config.reseed..ctx.chunks() {
                singular += ctx.sweep(&[fa], nd, c, |b| b as usize >= first, |b, v| {
                    tuples.push(a as u32);
                    tuples.push(b);
                    le.push(v);
                });
            }
        }
        (tuples, le, singular)
    });
    let mut tuples = Vec::new();
    let mut log_evidence = Vec::new();
    let mut skipped = 0;
    for (t, le, s) in rows {
        tuples.extend(t);
        log_evidence.extend(le);
        skipped += s;
    }
    let total_pairs = m * (m - 1) / 2;
    skipped += total_pairs - log_evidence.len();
    let log_prior = tuples.chunks(2).map(|t| ctx.log_tuple_prior(t)).collect();
    let evaluations = log_evidence.len();
    Ok(ScanResult::finish(2, nd, tuples, log_evidence, log_prior, ctx.config.epsilon, evaluations, skipped))
}

/// Extend each retained tuple of `prev` by one frequency scanned over the
/// whole grid. A tuple reachable from several retained parents is evaluated
/// once, from the highest-ranked parent.
pub fn scan_greedy(ctx: &ScanContext, prev: &ScanResult, exec: &Executor) -> Result<ScanResult> {
    if prev.nf == 0 {
        return Err(Error::Config("greedy extension needs a level with at least one frequency".into()));
    }
    let nf = prev.nf + 1;
    let nd = prev.nd;
    let parents: Vec<&[u32]> = prev.retained.iter().map(|&t| prev.tuple(t)).collect();
    ctx.check_memory(ctx.grid.count * parents.len(), nf)?;
    let rank: HashMap<&[u32], usize> = parents.iter().enumerate().map(|(r, t)| (*t, r)).collect();
    let chunks = ctx.chunks();
    let units = parents.len() * chunks;
    let parts = exec.map(units, |u| {
        let (r, c) = (u / chunks, u % chunks);
        let parent = parents[r];
        let freqs: Vec<f64> = parent.iter().map(|&i| ctx.grid.freq(i as usize)).collect();
        let mut key = Vec::with_capacity(nf);
        let mut probe = Vec::with_capacity(nf - 1);
        let accept = |m: u32| -> bool {
            if parent.iter().any(|&p| ctx.too_close(p, m)) {
                return false;
            }
            // Skip if an earlier parent also generates this tuple.
            for skip in 0..parent.len() {
                probe.clear();
                probe.extend(parent.iter().enumerate().filter(|&(i, _)| i != skip).map(|(_, &v)| v));
                probe.push(m);
                probe.sort_unstable();
                if matches!(rank.get(probe.as_slice()), Some(&r2) if r2 < r) {
                    return false;
                }
            }
            true
        };
        let mut out_t = Vec::new();
        let mut out_e = Vec::new();
        let accept_cell = std::cell::RefCell::new(accept);
        let singular = ctx.sweep(&freqs, nd, c, |m| (accept_cell.borrow_mut())(m), |m, v| {
            key.clear();
            key.extend_from_slice(parent);
            key.push(m);
            key.sort_unstable();
            out_t.extend_from_slice(&key);
            out_e.push(v);
        });
        (out_t, out_e, singular)
    });
    let mut tuples = Vec::new();
    let mut log_evidence = Vec::new();
    let mut singular = 0;
    for (t, e, s) in parts {
        tuples.extend(t);
        log_evidence.extend(e);
        singular += s;
    }
    let evaluations = log_evidence.len();
    let log_prior = tuples.chunks(nf).map(|t| ctx.log_tuple_prior(t)).collect();
    Ok(ScanResult::finish(nf, nd, tuples, log_evidence, log_prior, ctx.config.epsilon, evaluations, singular))
}

/// Outcome of the stopping rule over successive `p(N_f = n | data)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub nf_stop: usize,
    /// No level met the stopping criterion.
    pub warning: bool,
}

/// Smallest `n >= 1` with `p(n) < stop_ratio * sum_{i<n} p(i)`; otherwise the
/// last level with the warning flag. Inputs may be unnormalized.
pub fn truncate_nf(posteriors: &[f64], stop_ratio: f64) -> Truncation {
    let logs: Vec<f64> = posteriors.iter().map(|p| p.ln()).collect();
    truncate_nf_log(&logs, stop_ratio)
}

/// [`truncate_nf`] on log-probabilities.
pub fn truncate_nf_log(log_posteriors: &[f64], stop_ratio: f64) -> Truncation {
    for n in 1..log_posteriors.len() {
        let below = log_sum_exp(&log_posteriors[..n]);
        if log_posteriors[n] < stop_ratio.ln() + below {
            return Truncation { nf_stop: n, warning: false };
        }
    }
    Truncation {
        nf_stop: log_posteriors.len().saturating_sub(1),
        warning: true,
    }
}
