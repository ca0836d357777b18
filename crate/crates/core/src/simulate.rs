//! Synthetic data: signals, noise and observing cadences.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::analysis::{two_frequency, AnalysisConfig};
use crate::compare::overlap_report;
use crate::error::{Error, Result};
use crate::par::Executor;
use crate::priors::PriorOverrides;
use crate::timeseries::{Observation, SeriesKind, TimeSeries};

pub const SIDEREAL_DAY: f64 = 0.997_269_57;
pub const SYNODIC_MONTH: f64 = 29.530_589;
pub const YEAR: f64 = 365.25;

/// `amplitude * cos(2 pi frequency x + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub frequency: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

/// Stylized Keplerian: harmonic `n` has amplitude `k0 * e^(n-1)` and phase
/// `n * phase`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keplerian {
    pub period: f64,
    pub k0: f64,
    pub eccentricity: f64,
    pub harmonics: usize,
    #[serde(default)]
    pub phase: f64,
}

impl Keplerian {
    pub fn components(&self) -> Vec<Sinusoid> {
        (1..=self.harmonics)
            .map(|n| Sinusoid {
                frequency: n as f64 / self.period,
                amplitude: self.k0 * self.eccentricity.powi(n as i32 - 1),
                phase: n as f64 * self.phase,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NoiseSpec {
    Constant { sigma: f64 },
    /// Each `sigma_k` drawn uniformly from `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    PerPoint { sigmas: Vec<f64> },
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec::Constant { sigma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSpec {
    #[serde(default)]
    pub sinusoids: Vec<Sinusoid>,
    /// Coefficients of `x^0, x^1, ...`.
    #[serde(default)]
    pub polynomial: Vec<f64>,
    #[serde(default)]
    pub keplerian: Option<Keplerian>,
    #[serde(default)]
    pub noise: NoiseSpec,
    /// True excess scatter, hidden from the reported uncertainties.
    #[serde(default)]
    pub jitter: f64,
    /// Add no noise at all; `sigma_k` are still reported.
    #[serde(default)]
    pub noiseless: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub kind: SeriesKind,
}

impl SignalSpec {
    pub fn validate(&self) -> Result<()> {
        if let Some(k) = &self.keplerian {
            if !(0.0..1.0).contains(&k.eccentricity) {
                return Err(Error::Config(format!("eccentricity must lie in [0, 1), got {}", k.eccentricity)));
            }
            if !(k.k0 >= 0.0) {
                return Err(Error::Config(format!("K0 must be non-negative, got {}", k.k0)));
            }
            if k.harmonics == 0 {
                return Err(Error::Config("a Keplerian needs at least one harmonic".into()));
            }
            if !(k.period > 0.0) {
                return Err(Error::Config(format!("period must be positive, got {}", k.period)));
            }
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Config(format!("jitter must be non-negative, got {}", self.jitter)));
        }
        match &self.noise {
            NoiseSpec::Constant { sigma } if !(*sigma > 0.0) => Err(Error::Config(format!("sigma must be positive, got {sigma}"))),
            NoiseSpec::Uniform { lo, hi } if !(*lo > 0.0 && hi >= lo) => Err(Error::Config(format!("need 0 < lo <= hi, got [{lo}, {hi}]"))),
            NoiseSpec::PerPoint { sigmas } if sigmas.iter().any(|s| !(*s > 0.0)) => Err(Error::Config("per-point sigmas must be positive".into())),
            _ => Ok(()),
        }
    }

    /// All sinusoidal components, including the Keplerian harmonics.
    pub fn components(&self) -> Vec<Sinusoid> {
        let mut out = self.sinusoids.clone();
        if let Some(k) = &self.keplerian {
            out.extend(k.components());
        }
        out
    }

    /// Noise-free model value at `x`.
    pub fn model(&self, x: f64) -> f64 {
        let periodic: f64 = self
            .components()
            .iter()
            .map(|c| c.amplitude * (TAU * c.frequency * x + c.phase).cos())
            .sum();
        let poly: f64 = self.polynomial.iter().rev().fold(0.0, |acc, c| acc * x + c);
        periodic + poly
    }
}

pub fn gen_signal(spec: &SignalSpec, times: &[f64]) -> Result<TimeSeries> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let sigmas: Vec<f64> = match &spec.noise {
        NoiseSpec::Constant { sigma } => vec![*sigma; times.len()],
        NoiseSpec::Uniform { lo, hi } => times.iter().map(|_| if lo == hi { *lo } else { rng.random_range(*lo..*hi) }).collect(),
        NoiseSpec::PerPoint { sigmas } => {
            if sigmas.len() != times.len() {
                return Err(Error::Config(format!("{} sigmas for {} times", sigmas.len(), times.len())));
            }
            sigmas.clone()
        }
    };
    let comps = spec.components();
    let observations = times
        .iter()
        .zip(&sigmas)
        .map(|(&x, &s)| {
            let periodic: f64 = comps.iter().map(|c| c.amplitude * (TAU * c.frequency * x + c.phase).cos()).sum();
            let poly: f64 = spec.polynomial.iter().rev().fold(0.0, |acc, c| acc * x + c);
            let noise = if spec.noiseless {
                0.0
            } else {
                let sd = (s * s + spec.jitter * spec.jitter).sqrt();
                Normal::new(0.0, sd).expect("positive sd").sample(&mut rng)
            };
            Observation::new(x, periodic + poly + noise, s)
        })
        .collect();
    TimeSeries::new(observations, spec.kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CadenceMode {
    Uniform,
    RandomUniform,
    GroundBased,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroundBased {
    /// Length of the nightly observing window.
    pub night_hours: f64,
    /// Months per year during which the target cannot be observed.
    pub season_gap_months: f64,
    /// Exponent `s` of the lunar weight `((1 + cos(2 pi t / month)) / 2)^s`;
    /// `t = 0` is a full moon.
    pub lunar_strength: f64,
    /// Anchor the nightly window to the sidereal rather than the solar day.
    pub sidereal: bool,
}

impl Default for GroundBased {
    fn default() -> Self {
        Self {
            night_hours: 8.0,
            season_gap_months: 3.0,
            lunar_strength: 2.0,
            sidereal: true,
        }
    }
}

impl GroundBased {
    fn day(&self) -> f64 {
        if self.sidereal {
            SIDEREAL_DAY
        } else {
            1.0
        }
    }

    pub fn in_night(&self, t: f64) -> bool {
        let d = self.day();
        (t / d).rem_euclid(1.0) * 24.0 < self.night_hours
    }

    /// The unobservable season is the last `season_gap_months` of each year.
    pub fn in_season_gap(&self, t: f64) -> bool {
        (t / YEAR).rem_euclid(1.0) >= 1.0 - self.season_gap_months / 12.0
    }

    pub fn allows(&self, t: f64) -> bool {
        self.in_night(t) && !self.in_season_gap(t)
    }

    pub fn lunar_weight(&self, t: f64) -> f64 {
        ((1.0 + (TAU * t / SYNODIC_MONTH).cos()) / 2.0).powf(self.lunar_strength)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CadenceSpec {
    pub mode: CadenceMode,
    pub n_obs: usize,
    pub span: f64,
    #[serde(default)]
    pub start: f64,
    #[serde(default)]
    pub ground: GroundBased,
}

impl CadenceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_obs == 0 {
            return Err(Error::Config("n_obs must be positive".into()));
        }
        if !(self.span > 0.0 && self.span.is_finite()) {
            return Err(Error::Config(format!("span must be positive, got {}", self.span)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cadence {
    pub times: Vec<f64>,
    /// Requested minus generated observations.
    pub shortfall: usize,
}

const MAX_TRIES_PER_POINT: usize = 10_000;

pub fn gen_cadence(spec: &CadenceSpec, seed: u64) -> Result<Cadence> {
    spec.validate()?;
    let n = spec.n_obs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times = match spec.mode {
        CadenceMode::Uniform => {
            if n == 1 {
                vec![spec.start]
            } else {
                (0..n).map(|i| spec.start + spec.span * i as f64 / (n - 1) as f64).collect()
            }
        }
        CadenceMode::RandomUniform => {
            let mut t: Vec<f64> = (0..n).map(|_| spec.start + rng.random::<f64>() * spec.span).collect();
            t.sort_by(f64::total_cmp);
            t
        }
        CadenceMode::GroundBased => {
            let g = &spec.ground;
            if !(g.night_hours > 0.0 && g.night_hours <= 24.0) {
                return Err(Error::InfeasibleCadence(format!("night window of {} h", g.night_hours)));
            }
            if !(0.0..12.0).contains(&g.season_gap_months) {
                return Err(Error::InfeasibleCadence(format!("seasonal gap of {} months leaves no observing season", g.season_gap_months)));
            }
            if !(g.lunar_strength >= 0.0) {
                return Err(Error::Config(format!("lunar strength must be non-negative, got {}", g.lunar_strength)));
            }
            if open_fraction(spec) == 0.0 {
                return Err(Error::InfeasibleCadence("no observable time inside the requested span".into()));
            }
            let mut t = Vec::with_capacity(n);
            let budget = n.saturating_mul(MAX_TRIES_PER_POINT);
            let mut tries = 0;
            while t.len() < n && tries < budget {
                tries += 1;
                let x = spec.start + rng.random::<f64>() * spec.span;
                if g.allows(x) && rng.random::<f64>() < g.lunar_weight(x) {
                    t.push(x);
                }
            }
            t.sort_by(f64::total_cmp);
            t
        }
    };
    Ok(Cadence {
        shortfall: n - times.len(),
        times,
    })
}

/// Fraction of the span open to observation, sampled on a fine grid.
fn open_fraction(spec: &CadenceSpec) -> f64 {
    let steps = ((spec.span / (spec.ground.day() / 96.0)).ceil() as usize).clamp(1000, 10_000_000);
    let open = (0..steps)
        .filter(|&i| spec.ground.allows(spec.start + spec.span * (i as f64 + 0.5) / steps as f64))
        .count();
    open as f64 / steps as f64
}

/// Ground-truth sidecar for a simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub signal: SignalSpec,
    pub cadence: CadenceSpec,
    pub cadence_seed: u64,
    pub components: Vec<Sinusoid>,
    pub shortfall: usize,
}

/// Generate a cadence and a signal on it.
pub fn simulate(signal: &SignalSpec, cadence: &CadenceSpec, cadence_seed: u64) -> Result<(TimeSeries, Truth)> {
    let c = gen_cadence(cadence, cadence_seed)?;
    let ts = gen_signal(signal, &c.times)?;
    Ok((
        ts,
        Truth {
            signal: signal.clone(),
            cadence: *cadence,
            cadence_seed,
            components: signal.components(),
            shortfall: c.shortfall,
        },
    ))
}

/// Overlap of the `P2` and `P1 / 2` marginals under one cadence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AliasOutcome {
    pub overlap: f64,
    pub log_b21: f64,
    /// Posterior mode of `delta = f2 - 2 f1`.
    pub delta_mode: f64,
    pub shortfall: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AliasPair {
    pub seed: u64,
    pub a: AliasOutcome,
    pub b: AliasOutcome,
}

/// Observe `base` under two cadences and compare, for each, the posterior of
/// the upper frequency with the lower frequency's posterior doubled. The
/// cadence and noise draws are both derived from `seed`, so identical
/// cadences give identical outcomes.
pub fn replicate_aliasing_experiment(
    base: &SignalSpec,
    cadence_a: &CadenceSpec,
    cadence_b: &CadenceSpec,
    priors: &PriorOverrides,
    config: &AnalysisConfig,
    seed: u64,
    exec: &Executor,
) -> Result<AliasPair> {
    let run = |cadence: &CadenceSpec| -> Result<AliasOutcome> {
        let signal = SignalSpec {
            seed: seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1),
            ..base.clone()
        };
        let (ts, truth) = simulate(&signal, cadence, seed)?;
        let resolved = priors.resolve(&ts)?;
        let two = two_frequency(&ts, &resolved, config, exec)?;
        Ok(AliasOutcome {
            overlap: overlap_report(&two.upper, &two.lower.scaled(2.0))?,
            log_b21: two.log_b21,
            delta_mode: two.delta.mode(),
            shortfall: truth.shortfall,
        })
    };
    Ok(AliasPair {
        seed,
        a: run(cadence_a)?,
        b: run(cadence_b)?,
    })
}

/// Setup of a paired aliasing study: one signal observed under two cadences.
/// Missing fields in a serialized setup take the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AliasSetup {
    pub signal: SignalSpec,
    pub cadence_a: CadenceSpec,
    pub cadence_b: CadenceSpec,
    pub priors: PriorOverrides,
    pub analysis: AnalysisConfig,
}

impl Default for AliasSetup {
    /// Eccentric orbit (strong first harmonic) seen from the ground versus at
    /// random times. The grid is fine enough that each frequency posterior
    /// spreads over several nodes.
    fn default() -> Self {
        let signal = SignalSpec {
            sinusoids: Vec::new(),
            polynomial: Vec::new(),
            keplerian: Some(Keplerian {
                period: 8.428,
                k0: 6.0,
                eccentricity: 0.3,
                harmonics: 2,
                phase: 0.7,
            }),
            noise: NoiseSpec::Constant { sigma: 1.0 },
            jitter: 0.0,
            noiseless: false,
            seed: 0,
            kind: SeriesKind::Doppler,
        };
        let cadence_a = CadenceSpec {
            mode: CadenceMode::GroundBased,
            n_obs: 40,
            span: 180.0,
            start: 0.0,
            ground: GroundBased {
                lunar_strength: 10.0,
                ..GroundBased::default()
            },
        };
        let cadence_b = CadenceSpec {
            mode: CadenceMode::RandomUniform,
            ..cadence_a
        };
        let priors = PriorOverrides {
            f_max: Some(0.3),
            nd_max: Some(0),
            ..PriorOverrides::default()
        };
        let mut analysis = AnalysisConfig::default();
        analysis.scan.oversample = 37.0;
        Self {
            signal,
            cadence_a,
            cadence_b,
            priors,
            analysis,
        }
    }
}

impl AliasSetup {
    pub fn run(&self, seed: u64, exec: &Executor) -> Result<AliasPair> {
        replicate_aliasing_experiment(&self.signal, &self.cadence_a, &self.cadence_b, &self.priors, &self.analysis, seed, exec)
    }
}
