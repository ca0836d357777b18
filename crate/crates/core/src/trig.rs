//! Incremental sine/cosine tables for stepping through a frequency grid.
//!
//! Advancing from `f` to `f + df` uses the angle-addition identities. Rounding
//! error grows slowly with the number of steps, so the table is recomputed
//! directly whenever the node index is a multiple of the reseed interval.
//! Chunked scans start on those same boundaries, which makes the values
//! independent of how the grid is split between workers.

use std::f64::consts::TAU;

use crate::grid::FrequencyGrid;

pub const DEFAULT_RESEED: usize = 1024;

#[derive(Debug, Clone)]
pub struct TrigTable {
    xs: Vec<f64>,
    sin: Vec<f64>,
    cos: Vec<f64>,
    step_sin: Vec<f64>,
    step_cos: Vec<f64>,
    f_min: f64,
    step: f64,
    node: usize,
    reseed: usize,
}

impl TrigTable {
    /// Table positioned at grid node `node`.
    pub fn new(xs: &[f64], grid: &FrequencyGrid, node: usize, reseed: usize) -> Self {
        let (step_sin, step_cos) = xs.iter().map(|&x| (TAU * grid.step * x).sin_cos()).unzip();
        let mut t = Self {
            xs: xs.to_vec(),
            sin: vec![0.0; xs.len()],
            cos: vec![0.0; xs.len()],
            step_sin,
            step_cos,
            f_min: grid.f_min,
            step: grid.step,
            node,
            reseed: reseed.max(1),
        };
        t.recompute();
        t
    }

    fn recompute(&mut self) {
        let f = self.frequency();
        for ((x, s), c) in self.xs.iter().zip(self.sin.iter_mut()).zip(self.cos.iter_mut()) {
            (*s, *c) = (TAU * f * x).sin_cos();
        }
    }

    pub fn node(&self) -> usize {
        self.node
    }

    pub fn frequency(&self) -> f64 {
        self.f_min + self.node as f64 * self.step
    }

    pub fn sin(&self) -> &[f64] {
        &self.sin
    }

    pub fn cos(&self) -> &[f64] {
        &self.cos
    }

    /// Move to the next grid node.
    pub fn advance(&mut self) {
        self.node += 1;
        if self.node % self.reseed == 0 {
            self.recompute();
            return;
        }
        for k in 0..self.xs.len() {
            let (s, c) = (self.sin[k], self.cos[k]);
            let (ds, dc) = (self.step_sin[k], self.step_cos[k]);
            self.sin[k] = s * dc + c * ds;
            self.cos[k] = c * dc - s * ds;
        }
    }
}
