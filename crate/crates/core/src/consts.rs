//! Physical constants (SI units, CODATA 2018 exact/recommended values).

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fundamental constants plus the nuclear gyromagnetic ratios used by the
/// bath models. All values are SI; gyromagnetic ratios are in Hz/T (γ/2π
/// magnitudes).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PhysicalConstants {
    /// Planck constant h (J·s).
    pub h: f64,
    /// Reduced Planck constant ħ (J·s).
    pub hbar: f64,
    /// Bohr magneton μ_B (J/T).
    pub mu_b: f64,
    /// Vacuum permeability μ₀ (T·m/A).
    pub mu_0: f64,
    /// Boltzmann constant k_B (J/K).
    pub k_b: f64,
    /// Nuclear magneton μ_N (J/T).
    pub mu_n: f64,
    /// ⁸⁹Y gyromagnetic ratio magnitude (Hz/T).
    pub gamma_y89: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            h: 6.626_070_15e-34,
            hbar: 6.626_070_15e-34 / (2.0 * std::f64::consts::PI),
            mu_b: 9.274_010_078_3e-24,
            mu_0: 1.256_637_062_12e-6,
            k_b: 1.380_649e-23,
            mu_n: 5.050_783_746_1e-27,
            gamma_y89: 2.0949e6,
        }
    }
}

impl PhysicalConstants {
    /// Checks strict positivity and the ħ = h/2π relation (relative 1e-12).
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("h", self.h),
            ("hbar", self.hbar),
            ("mu_b", self.mu_b),
            ("mu_0", self.mu_0),
            ("k_b", self.k_b),
            ("mu_n", self.mu_n),
            ("gamma_y89", self.gamma_y89),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "constant {name} must be finite and positive, got {v}"
                )));
            }
        }
        let expected = self.h / (2.0 * std::f64::consts::PI);
        if ((self.hbar - expected) / expected).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "hbar = {} is not h/2pi = {expected}",
                self.hbar
            )));
        }
        Ok(())
    }

    /// Electron Zeeman frequency slope μ_B/h in Hz/T per unit g.
    pub fn zeeman_slope(&self) -> f64 {
        self.mu_b / self.h
    }
}
