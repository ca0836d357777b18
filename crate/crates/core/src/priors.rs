//! Prior densities over model size, frequencies, amplitudes, polynomial
//! coefficients and jitter.
//!
//! All densities are proper on their stated support. Log-densities return
//! `-inf` outside the support.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::TimeSeries;

/// Prior family for the jitter parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum JitterPrior {
    /// Modified Jeffreys `1/((s+B0) log(1+Bmax/B0))` on `[0, Bmax]`.
    ModifiedJeffreys,
    /// Modified Jeffreys truncated at `cutoff < Bmax`.
    Cutoff { cutoff: f64 },
    /// Half-normal with the given scale.
    HalfNormal { scale: f64 },
}

impl JitterPrior {
    pub fn name(&self) -> &'static str {
        match self {
            JitterPrior::ModifiedJeffreys => "mjeff",
            JitterPrior::Cutoff { .. } => "cutoff",
            JitterPrior::HalfNormal { .. } => "halfnormal",
        }
    }
}

/// Short names accepted on the command line and in config files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JitterPriorKind {
    Mjeff,
    Cutoff,
    Halfnormal,
}

impl std::str::FromStr for JitterPriorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mjeff" => Ok(Self::Mjeff),
            "cutoff" => Ok(Self::Cutoff),
            "halfnormal" => Ok(Self::Halfnormal),
            other => Err(format!("unknown jitter prior '{other}' (expected mjeff, cutoff or halfnormal)")),
        }
    }
}

/// Fully resolved prior hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub alpha: f64,
    pub beta: f64,
    pub nf_max: usize,
    pub nd_min: usize,
    pub nd_max: usize,
    pub a0: f64,
    pub a_max: f64,
    pub b0: f64,
    pub b_max: f64,
    pub f_min: f64,
    pub f_max: f64,
    pub jitter_min: f64,
    pub jitter_prior: JitterPrior,
}

/// Optional overrides; anything left `None` takes the data-driven default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorOverrides {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub nf_max: Option<usize>,
    pub nd_min: Option<usize>,
    pub nd_max: Option<usize>,
    pub a0: Option<f64>,
    pub a_max: Option<f64>,
    pub b0: Option<f64>,
    pub b_max: Option<f64>,
    pub f_min: Option<f64>,
    pub f_max: Option<f64>,
    pub jitter_min: Option<f64>,
    pub jitter_prior: Option<JitterPriorKind>,
    pub jitter_cutoff: Option<f64>,
    pub jitter_scale: Option<f64>,
}

impl PriorOverrides {
    /// Field-wise merge; values in `self` win over `other`.
    pub fn or(self, other: PriorOverrides) -> PriorOverrides {
        PriorOverrides {
            alpha: self.alpha.or(other.alpha),
            beta: self.beta.or(other.beta),
            nf_max: self.nf_max.or(other.nf_max),
            nd_min: self.nd_min.or(other.nd_min),
            nd_max: self.nd_max.or(other.nd_max),
            a0: self.a0.or(other.a0),
            a_max: self.a_max.or(other.a_max),
            b0: self.b0.or(other.b0),
            b_max: self.b_max.or(other.b_max),
            f_min: self.f_min.or(other.f_min),
            f_max: self.f_max.or(other.f_max),
            jitter_min: self.jitter_min.or(other.jitter_min),
            jitter_prior: self.jitter_prior.or(other.jitter_prior),
            jitter_cutoff: self.jitter_cutoff.or(other.jitter_cutoff),
            jitter_scale: self.jitter_scale.or(other.jitter_scale),
        }
    }

    /// Fill defaults from the data. `f_max` has no default.
    pub fn resolve(&self, ts: &TimeSeries) -> Result<PriorConfig> {
        let f_max = self
            .f_max
            .ok_or_else(|| Error::Config("f_max is required (--f-max)".into()))?;
        let precision = ts.mean_precision();
        let (y_lo, y_hi) = ts
            .ys()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), y| (lo.min(y), hi.max(y)));
        let y_abs = ts.ys().fold(0.0_f64, |m, y| m.max(y.abs()));
        let range = y_hi - y_lo;
        let a0 = self.a0.unwrap_or(precision);
        let b0 = self.b0.unwrap_or(precision);
        let a_max = self.a_max.unwrap_or_else(|| (10.0 * range).max(10.0 * a0));
        let b_max = self.b_max.unwrap_or_else(|| (10.0 * range.max(y_abs)).max(10.0 * b0));
        let jitter_prior = match self.jitter_prior.unwrap_or(JitterPriorKind::Mjeff) {
            JitterPriorKind::Mjeff => JitterPrior::ModifiedJeffreys,
            JitterPriorKind::Cutoff => JitterPrior::Cutoff {
                cutoff: self.jitter_cutoff.unwrap_or((3.0 * b0).min(b_max)),
            },
            JitterPriorKind::Halfnormal => JitterPrior::HalfNormal {
                scale: self.jitter_scale.unwrap_or(b0),
            },
        };
        let cfg = PriorConfig {
            alpha: self.alpha.unwrap_or(0.5),
            beta: self.beta.unwrap_or(0.5),
            nf_max: self.nf_max.unwrap_or(2),
            nd_min: self.nd_min.unwrap_or(0),
            nd_max: self.nd_max.unwrap_or(1),
            a0,
            a_max,
            b0,
            b_max,
            f_min: self.f_min.unwrap_or(2.0 / ts.span()),
            f_max,
            jitter_min: self.jitter_min.unwrap_or(0.0),
            jitter_prior,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return err(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return err(format!("beta must lie in (0, 1), got {}", self.beta));
        }
        if self.nf_max < 1 {
            return err("nf_max must be at least 1".into());
        }
        if self.nd_min > self.nd_max {
            return err(format!("nd_min {} exceeds nd_max {}", self.nd_min, self.nd_max));
        }
        if !(self.a0 > 0.0 && self.a_max > self.a0) {
            return err(format!("need 0 < a0 < a_max, got a0={} a_max={}", self.a0, self.a_max));
        }
        if !(self.b0 > 0.0 && self.b_max > self.b0) {
            return err(format!("need 0 < b0 < b_max, got b0={} b_max={}", self.b0, self.b_max));
        }
        if !(self.f_min > 0.0 && self.f_max > self.f_min && self.f_max.is_finite()) {
            return err(format!("need 0 < f_min < f_max, got f_min={} f_max={}", self.f_min, self.f_max));
        }
        if !(self.jitter_min >= 0.0 && self.jitter_min < self.b_max) {
            return err(format!("jitter_min must lie in [0, b_max), got {}", self.jitter_min));
        }
        match self.jitter_prior {
            JitterPrior::ModifiedJeffreys => {}
            JitterPrior::Cutoff { cutoff } => {
                if !(cutoff > self.jitter_min && cutoff <= self.b_max) {
                    return err(format!("jitter cutoff {cutoff} must lie in (jitter_min, b_max]"));
                }
            }
            JitterPrior::HalfNormal { scale } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return err(format!("half-normal jitter scale must be positive, got {scale}"));
                }
            }
        }
        if geometric_head(self.alpha, self.nf_max) < 0.0 {
            return err(format!("alpha={} too large for nf_max={}", self.alpha, self.nf_max));
        }
        if geometric_head(self.beta, self.nd_max - self.nd_min) < 0.0 {
            return err(format!("beta={} too large for the polynomial order range", self.beta));
        }
        Ok(())
    }

    /// `ln(f_max / f_min)`.
    pub fn log_freq_range(&self) -> f64 {
        (self.f_max / self.f_min).ln()
    }

    fn amp_norm(&self) -> f64 {
        (1.0 + self.a_max / self.a0).ln()
    }

    fn coef_norm(&self) -> f64 {
        (1.0 + self.b_max / self.b0).ln()
    }
}

/// Mass left for the lowest model after the geometric tail `r + r^2 + ... + r^k`.
fn geometric_head(r: f64, k: usize) -> f64 {
    1.0 - (1..=k).map(|i| r.powi(i as i32)).sum::<f64>()
}

/// Prior probability of `n` sinusoids.
pub fn prior_nf(n: usize, cfg: &PriorConfig) -> f64 {
    match n {
        0 => geometric_head(cfg.alpha, cfg.nf_max),
        n if n <= cfg.nf_max => cfg.alpha.powi(n as i32),
        _ => 0.0,
    }
}

/// Prior probability of polynomial order `n` on `nd_min..=nd_max`.
pub fn prior_nd(n: usize, cfg: &PriorConfig) -> f64 {
    if n < cfg.nd_min || n > cfg.nd_max {
        0.0
    } else if n == cfg.nd_min {
        geometric_head(cfg.beta, cfg.nd_max - cfg.nd_min)
    } else {
        cfg.beta.powi((n - cfg.nd_min) as i32)
    }
}

/// Log-uniform frequency density `1/(f log(f_max/f_min))`.
pub fn log_prior_frequency(f: f64, cfg: &PriorConfig) -> f64 {
    if f < cfg.f_min || f > cfg.f_max {
        return f64::NEG_INFINITY;
    }
    -(f.ln() + cfg.log_freq_range().ln())
}

/// Prior mass of the frequency interval `[lo, hi]` clipped to the support.
pub fn frequency_mass(lo: f64, hi: f64, cfg: &PriorConfig) -> f64 {
    let lo = lo.max(cfg.f_min);
    let hi = hi.min(cfg.f_max);
    if hi <= lo {
        return 0.0;
    }
    (hi / lo).ln() / cfg.log_freq_range()
}

/// Two-dimensional modified Jeffreys density for a sine/cosine pair,
/// `1/(2 pi A (A0 + A) log(1 + Amax/A0))` for `A <= Amax`.
pub fn log_prior_amplitude_pair(s: f64, c: f64, cfg: &PriorConfig) -> f64 {
    let a = s.hypot(c);
    log_prior_amplitude_ring(a, cfg)
}

/// Same density as [`log_prior_amplitude_pair`], parameterized by the radius.
pub fn log_prior_amplitude_ring(a: f64, cfg: &PriorConfig) -> f64 {
    if a > cfg.a_max {
        return f64::NEG_INFINITY;
    }
    if a == 0.0 {
        return f64::INFINITY;
    }
    -((2.0 * PI).ln() + a.ln() + (cfg.a0 + a).ln() + cfg.amp_norm().ln())
}

/// Implied radial density `1/((A0 + A) log(1 + Amax/A0))`.
pub fn prior_amplitude_radial(a: f64, cfg: &PriorConfig) -> f64 {
    if !(0.0..=cfg.a_max).contains(&a) {
        return 0.0;
    }
    1.0 / ((cfg.a0 + a) * cfg.amp_norm())
}

/// Signed modified Jeffreys for polynomial coefficients on `[-Bmax, Bmax]`.
pub fn log_prior_coefficient(b: f64, cfg: &PriorConfig) -> f64 {
    if b.abs() > cfg.b_max {
        return f64::NEG_INFINITY;
    }
    -((2.0 * (b.abs() + cfg.b0)).ln() + cfg.coef_norm().ln())
}

/// Non-negative modified Jeffreys on `[0, Bmax]`.
pub fn log_prior_coefficient_nonneg(b: f64, cfg: &PriorConfig) -> f64 {
    if !(0.0..=cfg.b_max).contains(&b) {
        return f64::NEG_INFINITY;
    }
    -((b + cfg.b0).ln() + cfg.coef_norm().ln())
}

/// Log-density of the configured jitter prior.
pub fn log_prior_jitter(s: f64, cfg: &PriorConfig) -> f64 {
    match cfg.jitter_prior {
        JitterPrior::ModifiedJeffreys => log_prior_coefficient_nonneg(s, cfg),
        JitterPrior::Cutoff { cutoff } => {
            if !(0.0..=cutoff).contains(&s) {
                return f64::NEG_INFINITY;
            }
            -((s + cfg.b0).ln() + (1.0 + cutoff / cfg.b0).ln().ln())
        }
        JitterPrior::HalfNormal { scale } => {
            if s < 0.0 {
                return f64::NEG_INFINITY;
            }
            (2.0 / PI).sqrt().ln() - scale.ln() - 0.5 * (s / scale).powi(2)
        }
    }
}

/// Jitter prior mass on `[0, s]`.
pub fn jitter_cdf(s: f64, cfg: &PriorConfig) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    match cfg.jitter_prior {
        JitterPrior::ModifiedJeffreys => ((1.0 + s.min(cfg.b_max) / cfg.b0).ln() / cfg.coef_norm()).min(1.0),
        JitterPrior::Cutoff { cutoff } => {
            ((1.0 + s.min(cutoff) / cfg.b0).ln() / (1.0 + cutoff / cfg.b0).ln()).min(1.0)
        }
        JitterPrior::HalfNormal { scale } => erf(s / (scale * std::f64::consts::SQRT_2)),
    }
}

/// Upper end of the jitter integration range.
pub fn jitter_upper(cfg: &PriorConfig) -> f64 {
    match cfg.jitter_prior {
        JitterPrior::ModifiedJeffreys => cfg.b_max,
        JitterPrior::Cutoff { cutoff } => cutoff,
        JitterPrior::HalfNormal { scale } => (10.0 * scale).min(cfg.b_max),
    }
}

// Abramowitz-Stegun 7.1.26 is too coarse for the 1e-12 normalization checks,
// so use the continued-fraction / series pair.
fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 2.5 {
        // Maclaurin series.
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= -x2 / n;
            let add = term / (2.0 * n + 1.0);
            sum += add;
            if add.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        sum * 2.0 / PI.sqrt()
    } else {
        1.0 - erfc_cf(x)
    }
}

fn erfc_cf(x: f64) -> f64 {
    // Lentz evaluation of the continued fraction for erfc.
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for i in 1..300 {
        let a = i as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (f * PI.sqrt())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn cfg() -> PriorConfig {
        PriorConfig {
            alpha: 0.5,
            beta: 0.5,
            nf_max: 2,
            nd_min: 0,
            nd_max: 1,
            a0: 1.0,
            a_max: 50.0,
            b0: 1.0,
            b_max: 50.0,
            f_min: 1e-3,
            f_max: 1.0,
            jitter_min: 0.0,
            jitter_prior: JitterPrior::ModifiedJeffreys,
        }
    }

    #[test]
    fn nf_geometric_example() {
        let c = cfg();
        assert_relative_eq!(prior_nf(0, &c), 0.25, epsilon = 1e-15);
        assert_relative_eq!(prior_nf(1, &c), 0.5, epsilon = 1e-15);
        assert_relative_eq!(prior_nf(2, &c), 0.25, epsilon = 1e-15);
        assert_eq!(prior_nf(3, &c), 0.0);
    }

    #[test]
    fn nf_ratio_is_alpha() {
        let c = PriorConfig { alpha: 0.3, nf_max: 6, ..cfg() };
        for n in 1..6 {
            assert_relative_eq!(prior_nf(n + 1, &c) / prior_nf(n, &c), 0.3, max_relative = 1e-14);
        }
        let total: f64 = (0..=6).map(|n| prior_nf(n, &c)).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-14);
    }

    #[test]
    fn alpha_too_large_rejected() {
        let c = PriorConfig { alpha: 0.7, nf_max: 3, ..cfg() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = PriorConfig { alpha: 0.6, nf_max: 1, ..cfg() };
        assert!(c.validate().is_ok());
    }

    #[test]
    fn nd_two_point() {
        let c = cfg();
        assert_relative_eq!(prior_nd(0, &c), 0.5);
        assert_relative_eq!(prior_nd(1, &c), 0.5);
        assert_eq!(prior_nd(2, &c), 0.0);
        let c = PriorConfig { nd_min: 1, nd_max: 4, beta: 0.4, ..cfg() };
        assert_eq!(prior_nd(0, &c), 0.0);
        let total: f64 = (0..=5).map(|n| prior_nd(n, &c)).sum();
        assert_relative_eq!(total, 1.0, epsilon = 1e-14);
        assert_relative_eq!(prior_nd(3, &c) / prior_nd(2, &c), 0.4, max_relative = 1e-14);
    }

    #[test]
    fn frequency_density_value() {
        let c = cfg();
        let p = log_prior_frequency(0.1, &c).exp();
        assert_relative_eq!(p, 1.0 / (0.1 * 1000f64.ln()), max_relative = 1e-14);
        assert_relative_eq!(p, 1.4476482730108394, max_relative = 1e-12);
        assert_eq!(log_prior_frequency(2.0, &c), f64::NEG_INFINITY);
        let lo = log_prior_frequency(c.f_min, &c).exp() * c.f_min;
        let hi = log_prior_frequency(c.f_max, &c).exp() * c.f_max;
        assert_relative_eq!(lo, hi, max_relative = 1e-14);
        assert_relative_eq!(frequency_mass(0.0, 10.0, &c), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn frequency_unit_rescaling() {
        let c = cfg();
        let k = 86400.0;
        let c2 = PriorConfig { f_min: c.f_min * k, f_max: c.f_max * k, ..c.clone() };
        // Density in log f is unchanged.
        let a = log_prior_frequency(0.2, &c) + 0.2f64.ln();
        let b = log_prior_frequency(0.2 * k, &c2) + (0.2 * k).ln();
        assert_relative_eq!(a, b, epsilon = 1e-12);
    }

    #[test]
    fn radial_ratio() {
        let c = cfg();
        let r = prior_amplitude_radial(0.1, &c) / prior_amplitude_radial(10.0, &c);
        assert_relative_eq!(r, 11.0 / 1.1, max_relative = 1e-14);
        assert_relative_eq!(r, 10.0, max_relative = 1e-14);
    }

    #[test]
    fn amplitude_pair_phase_independent() {
        let c = cfg();
        let a = 3.0;
        let vals: Vec<f64> = (0..16)
            .map(|k| {
                let phi = k as f64 * 0.4;
                log_prior_amplitude_pair(a * phi.cos(), a * phi.sin(), &c)
            })
            .collect();
        for v in &vals {
            assert_relative_eq!(*v, vals[0], epsilon = 1e-12);
        }
        assert_eq!(log_prior_amplitude_pair(0.0, 0.0, &c), f64::INFINITY);
        assert_eq!(log_prior_amplitude_pair(40.0, 40.0, &c), f64::NEG_INFINITY);
    }

    #[test]
    fn coefficient_priors() {
        let c = cfg();
        assert_relative_eq!(log_prior_coefficient(3.0, &c), log_prior_coefficient(-3.0, &c));
        let c2 = PriorConfig { b0: 1.0, b_max: std::f64::consts::E - 1.0, ..cfg() };
        assert_relative_eq!(log_prior_coefficient_nonneg(0.0, &c2).exp(), 1.0, epsilon = 1e-15);
        assert_eq!(log_prior_coefficient(51.0, &c), f64::NEG_INFINITY);
        assert_eq!(log_prior_coefficient_nonneg(-0.1, &c), f64::NEG_INFINITY);
    }

    #[test]
    fn signed_coefficient_analytic_integral() {
        // Antiderivative of 1/(2 (b+B0) L) on [0, Bmax] is log(b+B0)/(2L).
        let c = cfg();
        let l = (1.0 + c.b_max / c.b0).ln();
        let half = ((c.b_max + c.b0).ln() - c.b0.ln()) / (2.0 * l);
        assert!((2.0 * half - 1.0).abs() < 1e-9);
        // And the implemented density agrees with the integrand.
        let b = 7.5;
        assert_relative_eq!(log_prior_coefficient(b, &c).exp(), 1.0 / (2.0 * (b + c.b0) * l), max_relative = 1e-14);
    }

    #[test]
    fn erf_values() {
        assert_relative_eq!(erf(0.5), 0.5204998778130465, max_relative = 1e-14);
        assert_relative_eq!(erf(1.0), 0.8427007929497149, max_relative = 1e-14);
        assert_relative_eq!(erf(3.0), 0.9999779095030014, max_relative = 1e-14);
        assert_relative_eq!(erf(5.0), 0.9999999999984626, max_relative = 1e-14);
    }

    #[test]
    fn jitter_cdfs_reach_one() {
        let c = cfg();
        assert_relative_eq!(jitter_cdf(c.b_max, &c), 1.0, epsilon = 1e-14);
        let c2 = PriorConfig { jitter_prior: JitterPrior::Cutoff { cutoff: 3.0 }, ..cfg() };
        assert_relative_eq!(jitter_cdf(3.0, &c2), 1.0, epsilon = 1e-14);
        assert_eq!(log_prior_jitter(3.5, &c2), f64::NEG_INFINITY);
        let c3 = PriorConfig { jitter_prior: JitterPrior::HalfNormal { scale: 2.0 }, ..cfg() };
        assert_relative_eq!(jitter_cdf(2.0, &c3), 0.6826894921370859, max_relative = 1e-13);
    }

    #[test]
    fn resolve_defaults() {
        use crate::timeseries::{Observation, SeriesKind};
        let ts = TimeSeries::new(
            (0..10).map(|i| Observation::new(i as f64 * 10.0, (i % 3) as f64, 0.5)).collect(),
            SeriesKind::Generic,
        )
        .unwrap();
        let err = PriorOverrides::default().resolve(&ts).unwrap_err();
        assert!(err.to_string().contains("f_max"));
        let cfg = PriorOverrides { f_max: Some(0.5), ..Default::default() }.resolve(&ts).unwrap();
        assert_relative_eq!(cfg.a0, 0.5);
        assert_relative_eq!(cfg.f_min, 2.0 / 90.0);
        assert_relative_eq!(cfg.a_max, 20.0);
        assert_eq!(cfg.jitter_prior, JitterPrior::ModifiedJeffreys);
    }
}
