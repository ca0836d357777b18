//! Bayesian surrogate periodogram for unevenly sampled quasi-periodic series.
//!
//! A signal is modeled as a sum of sinusoids plus a low-order polynomial with
//! Gaussian noise and an unknown jitter term. Linear coefficients are
//! integrated analytically around their mode, jitter by quadrature, and
//! frequencies by summation over a grid, giving posterior probabilities for
//! the number of frequencies, the polynomial degree and the frequencies
//! themselves.

pub mod analysis;
pub mod compare;
pub mod engine;
pub mod error;
pub mod grid;
pub mod jitter;
pub mod linalg;
pub mod linear;
pub mod par;
pub mod priors;
pub mod scan;
pub mod simulate;
pub mod timeseries;
pub mod trig;

pub use error::{Error, Result};
pub use timeseries::{Observation, SeriesKind, TimeSeries};
