#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use qpsurrogate::analysis::JitterSpec;
use qpsurrogate::engine::Evaluator;
use qpsurrogate::grid::FrequencyGrid;
use qpsurrogate::jitter::JitterGrid;
use qpsurrogate::linear::{DesignMatrix, PriorMode};
use qpsurrogate::priors::{JitterPrior, PriorConfig};
use qpsurrogate::scan::{ScanConfig, ScanContext};
use qpsurrogate::{Observation, SeriesKind, TimeSeries};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn priors(f_min: f64, f_max: f64) -> PriorConfig {
    PriorConfig {
        alpha: 0.5,
        beta: 0.5,
        nf_max: 2,
        nd_min: 0,
        nd_max: 1,
        a0: 1.0,
        a_max: 100.0,
        b0: 1.0,
        b_max: 100.0,
        f_min,
        f_max,
        jitter_min: 0.0,
        jitter_prior: JitterPrior::ModifiedJeffreys,
    }
}

/// Random times on `[0, span]`, `y = sum A cos(2 pi f x + phi) + offset + noise`.
pub fn series(seed: u64, n: usize, span: f64, comps: &[(f64, f64, f64)], offset: f64, sigma: f64) -> TimeSeries {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut xs: Vec<f64> = (0..n).map(|_| r.random::<f64>() * span).collect();
    xs[0] = 0.0;
    xs[n - 1] = span;
    let obs = xs
        .iter()
        .map(|&x| {
            let s: f64 = comps
                .iter()
                .map(|&(f, a, p)| a * (std::f64::consts::TAU * f * x + p).cos())
                .sum();
            Observation::new(x, s + offset + noise.sample(&mut r), sigma)
        })
        .collect();
    TimeSeries::new(obs, SeriesKind::Generic).unwrap()
}

/// Grid with exactly `count` nodes starting at `f_min`.
pub fn grid_with(span: f64, oversample: f64, f_min: f64, count: usize) -> FrequencyGrid {
    let step = 1.0 / (oversample * span);
    let f_max = f_min + (count as f64 - 0.5) * step;
    let g = FrequencyGrid::new(span, f_min, f_max, oversample, usize::MAX).unwrap();
    assert_eq!(g.count, count);
    g
}

pub fn context<'a>(
    centered: &TimeSeries,
    priors: &'a PriorConfig,
    grid: FrequencyGrid,
    jitter: JitterSpec,
    mode: PriorMode,
    epsilon: f64,
) -> ScanContext<'a> {
    let jg: JitterGrid = jitter.build(priors).unwrap();
    let ev = Evaluator::new(centered, priors, &jg, mode);
    let cfg = ScanConfig {
        oversample: grid.oversample,
        epsilon,
        ..ScanConfig::default()
    };
    ScanContext::new(grid, priors, ev, cfg).unwrap()
}

pub fn context_with<'a>(
    centered: &TimeSeries,
    priors: &'a PriorConfig,
    grid: FrequencyGrid,
    jitter: JitterSpec,
    mode: PriorMode,
    config: ScanConfig,
) -> ScanContext<'a> {
    let jg: JitterGrid = jitter.build(priors).unwrap();
    let ev = Evaluator::new(centered, priors, &jg, mode);
    ScanContext::new(grid, priors, ev, ScanConfig { oversample: grid.oversample, ..config }).unwrap()
}

pub fn design_matrix(d: &DesignMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(d.rows(), d.cols(), |i, j| d.get(i, j))
}

/// Exact Gaussian linear-model evidence with an improper flat prior on the
/// coefficients: whiten, take the SVD, and split `y` into its projection on
/// the column space and the residual.
pub fn flat_evidence_oracle(ts: &TimeSeries, x: &DMatrix<f64>, sigma_j: f64) -> f64 {
    let n = ts.len();
    let d = x.ncols();
    let var: Vec<f64> = ts
        .observations()
        .iter()
        .map(|o| o.sigma * o.sigma + sigma_j * sigma_j)
        .collect();
    let xw = DMatrix::from_fn(n, d, |i, j| x[(i, j)] / var[i].sqrt());
    let yw = DVector::from_iterator(n, ts.observations().iter().zip(&var).map(|(o, v)| o.y / v.sqrt()));
    let svd = xw.svd(true, false);
    let u = svd.u.unwrap();
    let proj = u.transpose() * &yw;
    let resid = yw.norm_squared() - proj.norm_squared();
    let logdet: f64 = svd.singular_values.iter().map(|s| 2.0 * s.ln()).sum();
    let tau = std::f64::consts::TAU;
    -0.5 * var.iter().map(|v| (tau * v).ln()).sum::<f64>() - 0.5 * resid + 0.5 * d as f64 * tau.ln() - 0.5 * logdet
}

/// Weighted least squares by QR on the whitened system.
pub fn wls_oracle(ts: &TimeSeries, x: &DMatrix<f64>, sigma_j: f64) -> (DVector<f64>, f64) {
    let n = ts.len();
    let d = x.ncols();
    let sd: Vec<f64> = ts
        .observations()
        .iter()
        .map(|o| (o.sigma * o.sigma + sigma_j * sigma_j).sqrt())
        .collect();
    let xw = DMatrix::from_fn(n, d, |i, j| x[(i, j)] / sd[i]);
    let yw = DVector::from_iterator(n, ts.observations().iter().zip(&sd).map(|(o, s)| o.y / s));
    let qr = xw.clone().qr();
    let qty = qr.q().transpose() * &yw;
    let theta = qr.r().solve_upper_triangular(&qty).unwrap();
    let chi2 = (yw - xw * &theta).norm_squared();
    (theta, chi2)
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    (x, w)
}

/// Composite Gauss-Legendre over the panels `edges[i]..edges[i + 1]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, edges: &[f64], order: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    edges
        .windows(2)
        .map(|e| {
            let (a, b) = (e[0], e[1]);
            let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
            x.iter().zip(&w).map(|(xi, wi)| wi * f(c + h * xi)).sum::<f64>() * h
        })
        .sum()
}

/// Panel edges from `lo` to `hi`, geometric above `knee`; refines near zero.
pub fn geometric_edges(lo: f64, knee: f64, hi: f64, panels: usize) -> Vec<f64> {
    let start = lo.max(knee * 1e-12);
    let mut e = vec![lo];
    let r = (hi / start).powf(1.0 / panels as f64);
    let mut v = start;
    for _ in 0..panels {
        v *= r;
        e.push(v.min(hi));
    }
    *e.last_mut().unwrap() = hi;
    e
}
