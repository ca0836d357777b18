//! Jitter-marginalized conditional evidence for scans.
//!
//! A scan holds some columns fixed (the polynomial and any frequencies already
//! chosen) and sweeps one new sine/cosine pair over the grid. The weighted
//! sums over the fixed block are computed once per jitter node; each grid
//! node then only needs the cross terms with the new pair.

use std::f64::consts::PI;

use crate::error::Result;
use crate::jitter::JitterGrid;
use crate::linalg::SpdFactor;
use crate::linear::{ColumnLayout, ModePrior, PriorMode};
use crate::priors::PriorConfig;
use crate::timeseries::TimeSeries;

/// Per-dataset state shared by every scan: weights for each jitter node.
#[derive(Debug, Clone)]
pub struct Evaluator<'a> {
    n: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// `weights[j * n + k] = 1 / (sigma_k^2 + s_j^2)`.
    weights: Vec<f64>,
    /// `-0.5 sum_k ln(2 pi v_jk)`.
    offsets: Vec<f64>,
    nodes: Vec<f64>,
    jitter: JitterGrid,
    sigmas: Vec<f64>,
    priors: &'a PriorConfig,
    mode_prior: ModePrior,
    mode: PriorMode,
}

impl<'a> Evaluator<'a> {
    pub fn new(ts: &TimeSeries, priors: &'a PriorConfig, jitter: &JitterGrid, mode: PriorMode) -> Self {
        let n = ts.len();
        let mut weights = Vec::with_capacity(n * jitter.len());
        let mut offsets = Vec::with_capacity(jitter.len());
        for &s in jitter.nodes() {
            let mut lv = 0.0;
            for o in ts.observations() {
                let v = o.sigma * o.sigma + s * s;
                weights.push(1.0 / v);
                lv += (2.0 * PI * v).ln();
            }
            offsets.push(-0.5 * lv);
        }
        Self {
            n,
            xs: ts.xs().collect(),
            ys: ts.ys().collect(),
            weights,
            offsets,
            nodes: jitter.nodes().to_vec(),
            jitter: jitter.clone(),
            sigmas: ts.observations().iter().map(|o| o.sigma).collect(),
            priors,
            mode_prior: ModePrior::new(priors),
            mode,
        }
    }

    pub fn priors(&self) -> &'a PriorConfig {
        self.priors
    }

    pub fn jitter_nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    /// Precompute the fixed block for frequencies `freqs` and order `nd`.
    pub fn base(&self, freqs: &[f64], nd: usize) -> BaseBlock {
        let nb = freqs.len();
        let p = 2 * nb + nd + 1;
        let mut cols = Vec::with_capacity(self.n * p);
        for &x in &self.xs {
            for &f in freqs {
                let (s, c) = (2.0 * PI * f * x).sin_cos();
                cols.push(s);
                cols.push(c);
            }
            let mut v = 1.0;
            for _ in 0..=nd {
                cols.push(v);
                v *= x;
            }
        }
        let nj = self.nodes.len();
        let mut hbb = vec![0.0; nj * p * p];
        let mut bb = vec![0.0; nj * p];
        let mut yy = vec![0.0; nj];
        for j in 0..nj {
            let w = &self.weights[j * self.n..(j + 1) * self.n];
            let h = &mut hbb[j * p * p..(j + 1) * p * p];
            let b = &mut bb[j * p..(j + 1) * p];
            for k in 0..self.n {
                let row = &cols[k * p..(k + 1) * p];
                let wk = w[k];
                let y = self.ys[k];
                yy[j] += wk * y * y;
                for i in 0..p {
                    let wi = wk * row[i];
                    b[i] += wi * y;
                    for l in 0..=i {
                        h[i * p + l] += wi * row[l];
                    }
                }
            }
            for i in 0..p {
                for l in 0..i {
                    h[l * p + i] = h[i * p + l];
                }
            }
        }
        BaseBlock {
            p,
            nb,
            nd,
            cols,
            hbb,
            bb,
            yy,
        }
    }

    /// Per-jitter-node log evidence (unweighted) for the fixed block alone.
    pub fn base_terms(&self, base: &BaseBlock, scratch: &mut Scratch) -> Result<()> {
        let p = base.p;
        scratch.prepare(p, self.nodes.len());
        let layout = base.layout(false);
        for j in 0..self.nodes.len() {
            scratch.h[..p * p].copy_from_slice(&base.hbb[j * p * p..(j + 1) * p * p]);
            scratch.theta[..p].copy_from_slice(&base.bb[j * p..(j + 1) * p]);
            scratch.terms[j] = self.finish(self.offsets[j], p, base.yy[j], &layout, scratch)?;
        }
        Ok(())
    }

    /// Jitter-marginalized log evidence for the fixed block alone.
    pub fn eval_base(&self, base: &BaseBlock, scratch: &mut Scratch) -> Result<f64> {
        self.base_terms(base, scratch)?;
        self.integrate(base, None, scratch)
    }

    fn integrate(&self, base: &BaseBlock, pair: Option<(&[f64], &[f64])>, scratch: &mut Scratch) -> Result<f64> {
        let z = std::mem::take(&mut scratch.terms);
        let out = self.jitter.integrate(self.priors, &z, |s| self.term_at(s, base, pair, scratch));
        scratch.terms = z;
        out
    }

    /// Log evidence at an arbitrary jitter, built from the stored columns.
    fn term_at(&self, s: f64, base: &BaseBlock, pair: Option<(&[f64], &[f64])>, scratch: &mut Scratch) -> Result<f64> {
        let p = base.p;
        let d = if pair.is_some() { p + 2 } else { p };
        scratch.prepare(d, scratch.terms.len());
        scratch.row.resize(d, 0.0);
        scratch.h[..d * d].iter_mut().for_each(|v| *v = 0.0);
        scratch.theta[..d].iter_mut().for_each(|v| *v = 0.0);
        let (mut yy, mut lv) = (0.0, 0.0);
        for k in 0..self.n {
            let v = self.sigmas[k] * self.sigmas[k] + s * s;
            lv += (2.0 * PI * v).ln();
            let w = 1.0 / v;
            let y = self.ys[k];
            yy += w * y * y;
            scratch.row[..p].copy_from_slice(&base.cols[k * p..(k + 1) * p]);
            if let Some((sin, cos)) = pair {
                scratch.row[p] = sin[k];
                scratch.row[p + 1] = cos[k];
            }
            for i in 0..d {
                let wi = w * scratch.row[i];
                scratch.theta[i] += wi * y;
                for l in 0..=i {
                    scratch.h[i * d + l] += wi * scratch.row[l];
                }
            }
        }
        for i in 0..d {
            for l in 0..i {
                scratch.h[l * d + i] = scratch.h[i * d + l];
            }
        }
        let layout = base.layout(pair.is_some());
        self.finish(-0.5 * lv, d, yy, &layout, scratch)
    }

    /// Per-jitter-node log evidence (unweighted) with one extra sine/cosine
    /// pair appended.
    pub fn pair_terms(&self, base: &BaseBlock, sin: &[f64], cos: &[f64], scratch: &mut Scratch) -> Result<()> {
        let p = base.p;
        let d = p + 2;
        let nj = self.nodes.len();
        scratch.prepare(d, nj);
        let layout = base.layout(true);
        for j in 0..nj {
            let w = &self.weights[j * self.n..(j + 1) * self.n];
            let (hs, hc) = scratch.cross.split_at_mut(p);
            hs.iter_mut().for_each(|v| *v = 0.0);
            hc[..p].iter_mut().for_each(|v| *v = 0.0);
            let (mut ss, mut sc, mut cc, mut bs, mut bc) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for k in 0..self.n {
                let ws = w[k] * sin[k];
                let wc = w[k] * cos[k];
                ss += ws * sin[k];
                sc += ws * cos[k];
                cc += wc * cos[k];
                bs += ws * self.ys[k];
                bc += wc * self.ys[k];
                let row = &base.cols[k * p..(k + 1) * p];
                for i in 0..p {
                    hs[i] += ws * row[i];
                    hc[i] += wc * row[i];
                }
            }
            let h = &mut scratch.h;
            let hbb = &base.hbb[j * p * p..(j + 1) * p * p];
            for i in 0..p {
                h[i * d..i * d + p].copy_from_slice(&hbb[i * p..(i + 1) * p]);
                h[i * d + p] = hs[i];
                h[i * d + p + 1] = hc[i];
                h[p * d + i] = hs[i];
                h[(p + 1) * d + i] = hc[i];
            }
            h[p * d + p] = ss;
            h[p * d + p + 1] = sc;
            h[(p + 1) * d + p] = sc;
            h[(p + 1) * d + p + 1] = cc;
            scratch.theta[..p].copy_from_slice(&base.bb[j * p..(j + 1) * p]);
            scratch.theta[p] = bs;
            scratch.theta[p + 1] = bc;
            scratch.terms[j] = self.finish(self.offsets[j], d, base.yy[j], &layout, scratch)?;
        }
        Ok(())
    }

    /// Jitter-marginalized log evidence with one extra pair.
    pub fn eval_pair(&self, base: &BaseBlock, sin: &[f64], cos: &[f64], scratch: &mut Scratch) -> Result<f64> {
        self.pair_terms(base, sin, cos, scratch)?;
        self.integrate(base, Some((sin, cos)), scratch)
    }

    /// Factor `scratch.h`, solve for the mode (right-hand side in
    /// `scratch.theta`) and assemble the Laplace term; `offset` is the
    /// likelihood normalization at this jitter.
    fn finish(&self, offset: f64, d: usize, yy: f64, layout: &ColumnLayout, scratch: &mut Scratch) -> Result<f64> {
        if scratch.factor.dim() != d {
            scratch.factor = SpdFactor::new(d);
        }
        let logdet = scratch.factor.factor(&scratch.h[..d * d])?;
        scratch.rhs[..d].copy_from_slice(&scratch.theta[..d]);
        scratch.factor.solve(&mut scratch.theta[..d]);
        let fitted: f64 = scratch.rhs[..d].iter().zip(&scratch.theta[..d]).map(|(b, t)| b * t).sum();
        let chi2 = (yy - fitted).max(0.0);
        let lp = match self.mode {
            PriorMode::Proper => self.mode_prior.log_density(&scratch.theta[..d], layout),
            PriorMode::Flat => 0.0,
        };
        if lp == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(offset - 0.5 * chi2 + lp + 0.5 * d as f64 * (2.0 * PI).ln() - 0.5 * logdet)
    }
}

/// Weighted sums over the fixed columns, one set per jitter node.
#[derive(Debug, Clone)]
pub struct BaseBlock {
    p: usize,
    nb: usize,
    nd: usize,
    /// Row-major `n x p`.
    cols: Vec<f64>,
    hbb: Vec<f64>,
    bb: Vec<f64>,
    yy: Vec<f64>,
}

impl BaseBlock {
    pub fn width(&self) -> usize {
        self.p
    }

    fn layout(&self, with_pair: bool) -> ColumnLayout {
        let mut pairs: Vec<usize> = (0..self.nb).map(|i| 2 * i).collect();
        if with_pair {
            pairs.push(self.p);
        }
        ColumnLayout {
            pairs,
            poly_start: 2 * self.nb,
            nd: self.nd,
        }
    }
}

/// Per-worker buffers.
#[derive(Debug, Clone)]
pub struct Scratch {
    h: Vec<f64>,
    theta: Vec<f64>,
    rhs: Vec<f64>,
    cross: Vec<f64>,
    row: Vec<f64>,
    factor: SpdFactor,
    pub terms: Vec<f64>,
}

impl Scratch {
    pub fn new() -> Self {
        Self {
            h: Vec::new(),
            theta: Vec::new(),
            rhs: Vec::new(),
            cross: Vec::new(),
            row: Vec::new(),
            factor: SpdFactor::new(0),
            terms: Vec::new(),
        }
    }

    fn prepare(&mut self, d: usize, nj: usize) {
        self.h.resize(d * d, 0.0);
        self.theta.resize(d, 0.0);
        self.rhs.resize(d, 0.0);
        self.cross.resize(2 * d, 0.0);
        self.terms.resize(nj, 0.0);
    }
}

impl Default for Scratch {
    fn default() -> Self {
        Self::new()
    }
}
