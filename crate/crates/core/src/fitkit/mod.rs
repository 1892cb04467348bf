//! Measurement models and the least-squares engine behind them.

mod engine;
mod models;

pub use engine::{least_squares, FitResult, FittedParam, LeastSquaresOptions, MultiStart, Problem};
pub use models::{
    covariance_scan, fit_avoided_crossing, fit_biexponential_t1, fit_decay_noise_floor, fit_eseem,
    fit_field_sweep_gaussian, fit_stimulated, stimulated_echo_amplitude, CovarianceScanRow,
    SlopeSpec,
};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A two-pulse echo decay: amplitude (V) versus pulse separation τ (s).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayTrace {
    pub tau_s: Vec<f64>,
    pub amplitude_v: Vec<f64>,
    /// Optional per-point standard deviation.
    pub sigma_v: Option<Vec<f64>>,
}

impl DecayTrace {
    pub fn new(tau_s: Vec<f64>, amplitude_v: Vec<f64>) -> Result<Self> {
        let t = Self {
            tau_s,
            amplitude_v,
            sigma_v: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau_s.len() != self.amplitude_v.len() || self.tau_s.is_empty() {
            return Err(Error::InvalidInput(
                "trace must be nonempty with matching columns".into(),
            ));
        }
        if self.tau_s.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("τ must be strictly increasing".into()));
        }
        if self
            .amplitude_v
            .iter()
            .chain(self.tau_s.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput("non-finite trace entry".into()));
        }
        if let Some(s) = &self.sigma_v {
            if s.len() != self.tau_s.len() {
                return Err(Error::InvalidInput("σ column length mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tau_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau_s.is_empty()
    }
}

/// Three-pulse stimulated-echo amplitudes over (τ, T_w), with the separately
/// measured relaxation time T₁ fixed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StimEchoGrid {
    /// (τ, T_w, amplitude) triples; τ, T_w > 0.
    pub points: Vec<(f64, f64, f64)>,
    pub t1_s: f64,
}

impl StimEchoGrid {
    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidInput("stimulated-echo grid is empty".into()));
        }
        if self.t1_s <= 0.0 {
            return Err(Error::InvalidInput("T1 must be positive".into()));
        }
        for &(tau, tw, a) in &self.points {
            if !(tau > 0.0 && tw > 0.0) || !a.is_finite() {
                return Err(Error::InvalidInput(
                    "grid requires τ > 0, T_w > 0 and finite amplitudes".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Dispersive-shift data across an avoided crossing: resonator frequency and
/// half-width versus field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossingTrace {
    /// (B, f, κ) triples with B strictly monotone.
    pub points: Vec<(f64, f64, f64)>,
    /// Known field-to-frequency slope df/dB (Hz/T), if measured separately.
    pub slope_hz_per_t: Option<f64>,
}

impl CrossingTrace {
    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 5 {
            return Err(Error::InvalidInput(
                "crossing trace needs at least 5 points".into(),
            ));
        }
        let increasing = self.points.windows(2).all(|w| w[1].0 > w[0].0);
        let decreasing = self.points.windows(2).all(|w| w[1].0 < w[0].0);
        if !(increasing || decreasing) {
            return Err(Error::InvalidInput(
                "field column must be strictly monotone".into(),
            ));
        }
        if self
            .points
            .iter()
            .any(|&(b, f, k)| !(b.is_finite() && f.is_finite() && k.is_finite()))
        {
            return Err(Error::InvalidInput("non-finite crossing entry".into()));
        }
        Ok(())
    }
}
