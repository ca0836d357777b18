//! Design matrix, weighted least squares and the Laplace evidence over the
//! linear coefficients.
//!
//! For fixed frequencies, polynomial order and jitter, the model is linear in
//! the sine, cosine and polynomial coefficients. The integral over those
//! coefficients is approximated by expanding about the weighted least-squares
//! solution:
//!
//! `log Z = log L(theta_hat) + log p(theta_hat) + (d/2) log 2pi - (1/2) log det H`
//!
//! where `H = X^T W X` is the likelihood-only normal matrix.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SpdFactor;
use crate::priors::PriorConfig;
use crate::timeseries::TimeSeries;

/// Amplitudes below `AMPLITUDE_FLOOR * a0` evaluate the pair prior at the floor.
pub const AMPLITUDE_FLOOR: f64 = 1e-3;

/// Which prior factor enters the Laplace evidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorMode {
    #[default]
    Proper,
    /// Unit prior factor with unbounded support. The Laplace value is then the
    /// exact Gaussian integral; used for testing and the periodogram limit.
    Flat,
}

/// Row-major `N x (2 nf + nd + 1)` design with columns
/// `[sin f1, cos f1, ..., sin fN, cos fN, x^0, ..., x^nd]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    rows: usize,
    freqs: Vec<f64>,
    nd: usize,
    data: Vec<f64>,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        2 * self.freqs.len() + self.nd + 1
    }

    pub fn nf(&self) -> usize {
        self.freqs.len()
    }

    pub fn nd(&self) -> usize {
        self.nd
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let d = self.cols();
        &self.data[k * d..(k + 1) * d]
    }

    pub fn get(&self, k: usize, col: usize) -> f64 {
        self.data[k * self.cols() + col]
    }

    pub fn layout(&self) -> ColumnLayout {
        ColumnLayout::standard(self.nf(), self.nd)
    }

    /// Append an arbitrary extra column. Only used to probe degenerate designs.
    pub fn with_extra_column(&self, values: &[f64]) -> DesignMatrix {
        assert_eq!(values.len(), self.rows);
        let d = self.cols();
        let mut data = Vec::with_capacity(self.rows * (d + 1));
        for k in 0..self.rows {
            data.extend_from_slice(self.row(k));
            data.push(values[k]);
        }
        DesignMatrix {
            rows: self.rows,
            freqs: self.freqs.clone(),
            nd: self.nd + 1,
            data,
        }
    }
}

/// Positions of the sine/cosine pairs and polynomial columns inside a
/// coefficient vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnLayout {
    /// Index of the sine column of each pair; its cosine follows.
    pub pairs: Vec<usize>,
    /// First polynomial column.
    pub poly_start: usize,
    pub nd: usize,
}

impl ColumnLayout {
    pub fn standard(nf: usize, nd: usize) -> Self {
        Self {
            pairs: (0..nf).map(|i| 2 * i).collect(),
            poly_start: 2 * nf,
            nd,
        }
    }

    pub fn dim(&self) -> usize {
        2 * self.pairs.len() + self.nd + 1
    }
}

/// Build the design matrix for an ascending frequency tuple.
///
/// `min_separation` is the smallest admissible gap between frequencies,
/// normally one grid step.
pub fn build_design(ts: &TimeSeries, freqs: &[f64], nd: usize, min_separation: f64) -> Result<DesignMatrix> {
    for (i, &a) in freqs.iter().enumerate() {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Config(format!("frequency {a} must be positive and finite")));
        }
        for &b in &freqs[i + 1..] {
            if (a - b).abs() < min_separation {
                return Err(Error::DuplicateFrequency(a, b));
            }
        }
    }
    if freqs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("frequency tuple must be strictly increasing".into()));
    }
    let d = 2 * freqs.len() + nd + 1;
    let mut data = Vec::with_capacity(ts.len() * d);
    for x in ts.xs() {
        for &f in freqs {
            let (s, c) = (2.0 * PI * f * x).sin_cos();
            data.push(s);
            data.push(c);
        }
        let mut p = 1.0;
        for _ in 0..=nd {
            data.push(p);
            p *= x;
        }
    }
    Ok(DesignMatrix {
        rows: ts.len(),
        freqs: freqs.to_vec(),
        nd,
        data,
    })
}

/// Weighted least-squares solution for one jitter value.
#[derive(Debug, Clone)]
pub struct LinearFit {
    pub coeffs: Vec<f64>,
    pub chi2: f64,
    /// `log det H` with `H = X^T W X`.
    pub normal_matrix_logdet: f64,
    pub dof: usize,
    /// `H`, row-major.
    pub normal_matrix: Vec<f64>,
    /// `sum_k ln(2 pi (sigma_k^2 + sigma_j^2))`.
    pub log_variance_sum: f64,
}

impl LinearFit {
    /// `H^-1`, the Laplace covariance of the coefficients.
    pub fn covariance(&self) -> Result<Vec<f64>> {
        let mut f = SpdFactor::new(self.dof);
        f.factor(&self.normal_matrix)?;
        Ok(f.inverse())
    }
}

/// Minimize `sum_k w_k (y_k - model_k)^2` with `w_k = 1/(sigma_k^2 + sigma_j^2)`.
pub fn fit_linear(ts: &TimeSeries, design: &DesignMatrix, sigma_j: f64) -> Result<LinearFit> {
    let d = design.cols();
    let mut h = vec![0.0; d * d];
    let mut b = vec![0.0; d];
    let mut log_variance_sum = 0.0;
    for (k, obs) in ts.observations().iter().enumerate() {
        let v = obs.sigma * obs.sigma + sigma_j * sigma_j;
        let w = 1.0 / v;
        log_variance_sum += (2.0 * PI * v).ln();
        let row = design.row(k);
        for i in 0..d {
            let wi = w * row[i];
            b[i] += wi * obs.y;
            for j in 0..=i {
                h[i * d + j] += wi * row[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            h[j * d + i] = h[i * d + j];
        }
    }
    let mut factor = SpdFactor::new(d);
    let logdet = factor.factor(&h)?;
    let mut coeffs = b;
    factor.solve(&mut coeffs);
    let chi2 = ts
        .observations()
        .iter()
        .enumerate()
        .map(|(k, obs)| {
            let model: f64 = design.row(k).iter().zip(&coeffs).map(|(x, c)| x * c).sum();
            (obs.y - model).powi(2) / (obs.sigma * obs.sigma + sigma_j * sigma_j)
        })
        .sum();
    Ok(LinearFit {
        coeffs,
        chi2,
        normal_matrix_logdet: logdet,
        dof: d,
        normal_matrix: h,
        log_variance_sum,
    })
}

/// Log prior density of the coefficients at the mode, with the amplitude floor
/// applied. `-inf` when the mode lies outside the prior support.
pub fn log_prior_at_mode(theta: &[f64], layout: &ColumnLayout, priors: &PriorConfig) -> f64 {
    ModePrior::new(priors).log_density(theta, layout)
}

/// Constants of [`log_prior_at_mode`], hoisted out of scan loops.
#[derive(Debug, Clone, Copy)]
pub struct ModePrior {
    floor: f64,
    a0: f64,
    a_max: f64,
    b0: f64,
    b_max: f64,
    /// `-ln(2 pi ln(1 + Amax/A0))`.
    log_amp: f64,
    /// `-ln(2 ln(1 + Bmax/B0))`.
    log_coef: f64,
}

impl ModePrior {
    pub fn new(priors: &PriorConfig) -> Self {
        Self {
            floor: AMPLITUDE_FLOOR * priors.a0,
            a0: priors.a0,
            a_max: priors.a_max,
            b0: priors.b0,
            b_max: priors.b_max,
            log_amp: -(2.0 * PI * (1.0 + priors.a_max / priors.a0).ln()).ln(),
            log_coef: -(2.0 * (1.0 + priors.b_max / priors.b0).ln()).ln(),
        }
    }

    pub fn log_density(&self, theta: &[f64], layout: &ColumnLayout) -> f64 {
        let mut product = 1.0;
        let mut log_sum = 0.0;
        let mut push = |v: f64| {
            let next = product * v;
            if next.is_normal() {
                product = next;
            } else {
                log_sum += product.ln();
                product = v;
            }
        };
        for &p in &layout.pairs {
            let a = theta[p].hypot(theta[p + 1]);
            if a > self.a_max {
                return f64::NEG_INFINITY;
            }
            let a = a.max(self.floor);
            push(a * (self.a0 + a));
        }
        let coefs = &theta[layout.poly_start..layout.poly_start + layout.nd + 1];
        for c in coefs {
            if c.abs() > self.b_max {
                return f64::NEG_INFINITY;
            }
            push(c.abs() + self.b0);
        }
        layout.pairs.len() as f64 * self.log_amp + coefs.len() as f64 * self.log_coef - log_sum - product.ln()
    }
}

/// Combine the pieces of the Laplace approximation.
pub(crate) fn laplace_combine(
    log_variance_sum: f64,
    chi2: f64,
    logdet: f64,
    log_prior: f64,
    dof: usize,
) -> f64 {
    if log_prior == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    -0.5 * log_variance_sum - 0.5 * chi2 + log_prior + 0.5 * dof as f64 * (2.0 * PI).ln() - 0.5 * logdet
}

/// Laplace log evidence conditioned on frequencies, polynomial order and jitter.
pub fn laplace_log_evidence(
    ts: &TimeSeries,
    design: &DesignMatrix,
    sigma_j: f64,
    priors: &PriorConfig,
    mode: PriorMode,
) -> Result<f64> {
    let fit = fit_linear(ts, design, sigma_j)?;
    Ok(laplace_from_fit(&fit, &design.layout(), priors, mode))
}

pub fn laplace_from_fit(fit: &LinearFit, layout: &ColumnLayout, priors: &PriorConfig, mode: PriorMode) -> f64 {
    let lp = match mode {
        PriorMode::Proper => log_prior_at_mode(&fit.coeffs, layout, priors),
        PriorMode::Flat => 0.0,
    };
    laplace_combine(fit.log_variance_sum, fit.chi2, fit.normal_matrix_logdet, lp, fit.dof)
}

/// Plain Gaussian log likelihood of the data under a fixed model vector.
pub fn log_likelihood(ts: &TimeSeries, model: &[f64], sigma_j: f64) -> f64 {
    ts.observations()
        .iter()
        .zip(model)
        .map(|(o, m)| {
            let v = o.sigma * o.sigma + sigma_j * sigma_j;
            -0.5 * (2.0 * PI * v).ln() - 0.5 * (o.y - m).powi(2) / v
        })
        .sum()
}

/// Express centered polynomial coefficients `sum D_i (x - offset)^i` in the
/// original abscissa.
pub fn uncenter_polynomial(coeffs: &[f64], offset: f64) -> Vec<f64> {
    let n = coeffs.len();
    let mut out = vec![0.0; n];
    for (i, &c) in coeffs.iter().enumerate() {
        // (x - o)^i = sum_k C(i,k) x^k (-o)^(i-k)
        let mut binom = 1.0;
        for k in 0..=i {
            out[k] += c * binom * (-offset).powi((i - k) as i32);
            binom = binom * (i - k) as f64 / (k + 1) as f64;
        }
    }
    out
}
