//! Frequency grid and its discretized prior weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::{frequency_mass, PriorConfig};

pub const DEFAULT_OVERSAMPLE: f64 = 10.0;

/// Evenly spaced frequencies `f_min + m * step`, `m = 0..count`, with
/// `step = 1 / (oversample * span)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub f_min: f64,
    pub f_max: f64,
    pub oversample: f64,
    pub span: f64,
    pub step: f64,
    pub count: usize,
}

impl FrequencyGrid {
    pub fn new(span: f64, f_min: f64, f_max: f64, oversample: f64, max_nodes: usize) -> Result<Self> {
        if !(f_min > 0.0 && f_max > f_min && f_max.is_finite()) {
            return Err(Error::Config(format!("need 0 < f_min < f_max, got [{f_min}, {f_max}]")));
        }
        if !(oversample >= 1.0 && oversample.is_finite()) {
            return Err(Error::Config(format!("oversample must be >= 1, got {oversample}")));
        }
        if !(span > 0.0 && span.is_finite()) {
            return Err(Error::Config(format!("span must be positive, got {span}")));
        }
        let step = 1.0 / (oversample * span);
        let cells = ((f_max - f_min) / step * (1.0 + 1e-12)).floor();
        if cells + 1.0 > max_nodes as f64 {
            return Err(Error::MemoryCeiling(format!(
                "frequency grid would need {} nodes (limit {max_nodes}); lower --oversample or narrow [f_min, f_max]",
                cells + 1.0
            )));
        }
        let count = cells as usize + 1;
        if count < 2 {
            return Err(Error::Config(format!(
                "frequency range [{f_min}, {f_max}] holds fewer than 2 nodes at step {step}"
            )));
        }
        Ok(Self {
            f_min,
            f_max,
            oversample,
            span,
            step,
            count,
        })
    }

    pub fn freq(&self, m: usize) -> f64 {
        self.f_min + m as f64 * self.step
    }

    pub fn freqs(&self) -> Vec<f64> {
        (0..self.count).map(|m| self.freq(m)).collect()
    }

    /// Prior mass of node `m`'s cell (cells tile `[f_min, f_max]`).
    pub fn cell_mass(&self, m: usize, priors: &PriorConfig) -> f64 {
        let f = self.freq(m);
        let lo = if m == 0 { self.f_min } else { f - 0.5 * self.step };
        let hi = if m + 1 == self.count { self.f_max } else { f + 0.5 * self.step };
        frequency_mass(lo, hi, priors)
    }

    pub fn log_cell_masses(&self, priors: &PriorConfig) -> Vec<f64> {
        (0..self.count).map(|m| self.cell_mass(m, priors).ln()).collect()
    }

    /// Nearest node to `f`, if `f` falls inside the grid cells.
    pub fn nearest(&self, f: f64) -> Option<usize> {
        let m = ((f - self.f_min) / self.step).round();
        if m < 0.0 || m >= self.count as f64 {
            None
        } else {
            Some(m as usize)
        }
    }
}
