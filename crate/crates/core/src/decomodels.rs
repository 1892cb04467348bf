//! Closed-form decoherence models: instantaneous diffusion, sub-ensemble
//! spectral diffusion versus temperature and field angle, the ⁸⁹Y nuclear
//! bath, Purcell relaxation, resonator excitation filtering, and echo
//! envelope modulation.

use serde::{Deserialize, Serialize};

use crate::consts::PhysicalConstants;
use crate::fieldsearch::AngularSweep;
use crate::spinham::{self, FieldVector, SpinSystem};
use crate::{Error, Result};

const NINE_SQRT3: f64 = 15.588_457_268_119_895; // 9·√3

/// One class of environmental spins sharing a transition frequency.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubEnsemble {
    pub label: String,
    /// Spin density n_i (m⁻³).
    pub density_per_m3: f64,
    /// Linewidth Γ_i (Hz).
    pub linewidth_hz: f64,
    /// Transition matrix element M_i (dimensionless).
    pub matrix_element: f64,
    /// Transition frequency f_i (Hz); sets the Zeeman temperature h·f_i/k_B.
    pub frequency_hz: f64,
    /// Effective g-factor g_i of the sub-ensemble transition.
    pub g_eff: f64,
}

impl SubEnsemble {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.density_per_m3,
            self.linewidth_hz,
            self.matrix_element,
            self.frequency_hz,
            self.g_eff,
        ];
        if all.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(format!(
                "sub-ensemble {} has a negative or non-finite field",
                self.label
            )));
        }
        Ok(())
    }

    pub fn zeeman_temperature(&self, consts: &PhysicalConstants) -> f64 {
        consts.h * self.frequency_hz / consts.k_b
    }
}

/// The probed (central) spin transition for the temperature model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CentralSpinContext {
    /// Effective g of the probed transition.
    pub g_eff: f64,
    /// Central-spin linewidth (Hz); also the default sub-ensemble linewidth
    /// when an ensemble does not carry its own.
    pub linewidth_hz: f64,
    /// Residual, temperature-independent decoherence rate (Hz).
    pub gamma_res_hz: f64,
    /// Dimensionless flip-flop coupling fit parameter.
    pub xi: f64,
}

impl CentralSpinContext {
    pub fn validate(&self) -> Result<()> {
        if self.g_eff < 0.0 || self.xi < 0.0 || self.linewidth_hz <= 0.0 || self.gamma_res_hz < 0.0
        {
            return Err(Error::InvalidInput(
                "central spin context requires g ≥ 0, ξ ≥ 0, Γ > 0, Γ_res ≥ 0".into(),
            ));
        }
        Ok(())
    }
}

/// Resonator excitation filter: a Lorentzian of FWHM 1/pulse length sweeping
/// across a Gaussian spin line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResonatorFilter {
    /// Resonator centre frequency (Hz).
    pub f0_hz: f64,
    /// Excitation pulse length (s); bandwidth = 1/pulse_length.
    pub pulse_length_s: f64,
    /// Gaussian FWHM of the spin line (Hz).
    pub line_fwhm_hz: f64,
    /// Field-to-frequency conversion df/dB (Hz/T) for detuning sweeps.
    pub df_db_hz_per_t: f64,
}

impl ResonatorFilter {
    /// Lorentzian FWHM of the excitation window (Hz).
    pub fn bandwidth_hz(&self) -> f64 {
        1.0 / self.pulse_length_s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pulse_length_s > 0.0 && self.line_fwhm_hz > 0.0) {
            return Err(Error::InvalidInput(
                "filter requires positive pulse length and line FWHM".into(),
            ));
        }
        Ok(())
    }
}

/// Instantaneous-diffusion prefactor variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IdVariant {
    /// T₂ = 9√3·ħ / (π·μ₀·(gμ_B)²·n); refocusing angle fixed at π.
    Main,
    /// T₂ = 8h / (5·μ₀·(gμ_B)²·n) · sin²(θ/2)⁻¹ scaling written explicitly:
    /// the returned time diverges as θ → 0.
    Si,
}

/// Instantaneous-diffusion-limited T₂ (s) for resonant spin density `n`.
/// Returns infinity at n = 0 (no resonant partners) and, for the `Si`
/// variant, at θ = 0.
pub fn id_t2(
    g_eff: f64,
    density_per_m3: f64,
    variant: IdVariant,
    refocus_angle_rad: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    if g_eff <= 0.0 || !g_eff.is_finite() {
        return Err(Error::InvalidInput(format!(
            "g must be positive, got {g_eff}"
        )));
    }
    if density_per_m3 < 0.0 || !density_per_m3.is_finite() {
        return Err(Error::InvalidInput("density must be non-negative".into()));
    }
    if density_per_m3 == 0.0 {
        return Ok(f64::INFINITY);
    }
    let g_mu_sq = (g_eff * consts.mu_b).powi(2);
    let t2 = match variant {
        IdVariant::Main => {
            NINE_SQRT3 * consts.hbar
                / (std::f64::consts::PI * consts.mu_0 * g_mu_sq * density_per_m3)
        }
        IdVariant::Si => {
            let s = (refocus_angle_rad / 2.0).sin();
            if s == 0.0 {
                return Ok(f64::INFINITY);
            }
            8.0 * consts.h / (5.0 * consts.mu_0 * g_mu_sq * density_per_m3) / (s * s)
        }
    };
    Ok(t2)
}

/// Fraction of a Gaussian spin line admitted by the Lorentzian excitation
/// window, offset by `detuning_t`·df/dB. Adaptive Simpson quadrature to 1e-6
/// relative; the result is maximal at zero detuning.
pub fn excited_spin_density(
    total_density_per_m3: f64,
    filter: &ResonatorFilter,
    detuning_t: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    let _ = consts;
    filter.validate()?;
    if total_density_per_m3 < 0.0 {
        return Err(Error::InvalidInput("density must be non-negative".into()));
    }
    let frac = excited_fraction(filter, detuning_t)?;
    Ok(total_density_per_m3 * frac)
}

/// The overlap integral itself: ∫ Gaussian_pdf(f) · Lorentzian_peak1(f − Δ) df.
pub fn excited_fraction(filter: &ResonatorFilter, detuning_t: f64) -> Result<f64> {
    filter.validate()?;
    let sigma = filter.line_fwhm_hz / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let hwhm = filter.bandwidth_hz() / 2.0;
    let offset = detuning_t * filter.df_db_hz_per_t;
    let gauss = |f: f64| {
        (-f * f / (2.0 * sigma * sigma)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
    };
    let lorentz = |f: f64| hwhm * hwhm / ((f - offset).powi(2) + hwhm * hwhm);
    let integrand = |f: f64| gauss(f) * lorentz(f);

    // The Gaussian kills the integrand far from the line; the window must
    // still straddle the (possibly detuned) Lorentzian peak.
    let span = 12.0 * sigma + offset.abs() + 50.0 * hwhm;
    Ok(adaptive_simpson(&integrand, -span, span, 1e-8, 40))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        let m = 0.5 * (a + b);
        (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b))
    }
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: usize) -> f64 {
        let m = 0.5 * (a + b);
        let left = simpson(f, a, m);
        let right = simpson(f, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, left, tol / 2.0, depth - 1)
                + recurse(f, m, b, right, tol / 2.0, depth - 1)
        }
    }
    let whole = simpson(f, a, b);
    recurse(f, a, b, whole, tol * whole.abs().max(1e-300), depth)
}

/// Instantaneous-diffusion T₂ across a field sweep: the excitation filter
/// sets the resonant density at each field and the ID formula converts it to
/// a coherence limit.
#[allow(clippy::too_many_arguments)]
pub fn id_t2_profile(
    g_eff: f64,
    total_density_per_m3: f64,
    filter: &ResonatorFilter,
    line_center_t: f64,
    field_axis_t: &[f64],
    variant: IdVariant,
    refocus_angle_rad: f64,
    consts: &PhysicalConstants,
) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(field_axis_t.len());
    for &b in field_axis_t {
        let n_exc = excited_spin_density(total_density_per_m3, filter, b - line_center_t, consts)?;
        let t2 = id_t2(g_eff, n_exc, variant, refocus_angle_rad, consts)?;
        out.push((b, t2));
    }
    Ok(out)
}

/// Flip-flop rate within one sub-ensemble:
/// R_i = ξ·(μ_B⁴μ₀²/h²)·M_i²·(n_i²/Γ_i)·sech²(T_Z,i/T).
pub fn flip_flop_rate(
    e: &SubEnsemble,
    xi: f64,
    temperature_k: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    e.validate()?;
    if temperature_k <= 0.0 {
        return Err(Error::InvalidInput("temperature must be positive".into()));
    }
    if e.linewidth_hz == 0.0 {
        return Err(Error::InvalidInput(format!(
            "sub-ensemble {} has zero linewidth",
            e.label
        )));
    }
    let prefactor = xi * consts.mu_b.powi(4) * consts.mu_0.powi(2) / consts.h.powi(2);
    let s = sech(e.zeeman_temperature(consts) / temperature_k);
    Ok(prefactor * e.matrix_element.powi(2) * e.density_per_m3.powi(2) / e.linewidth_hz * s * s)
}

/// Spectral-diffusion linewidth contributed by one sub-ensemble:
/// Γ_SD,i = (π·μ₀·μ_B²/(9√3·h))·n_i·g_i·g·sech²(T_Z,i/T).
pub fn sd_linewidth(
    e: &SubEnsemble,
    g_central: f64,
    temperature_k: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    e.validate()?;
    if temperature_k <= 0.0 {
        return Err(Error::InvalidInput("temperature must be positive".into()));
    }
    let prefactor =
        std::f64::consts::PI * consts.mu_0 * consts.mu_b.powi(2) / (NINE_SQRT3 * consts.h);
    let s = sech(e.zeeman_temperature(consts) / temperature_k);
    Ok(prefactor * e.density_per_m3 * e.g_eff * g_central * s * s)
}

/// Decoherence rate and T₂ from the product R·Γ_SD and the residual rate Γ₀:
/// Γ = (R·Γ_SD/2)·(√(Γ₀² + R·Γ_SD/π) − Γ₀)⁻¹, evaluated through the
/// algebraically identical rationalised form (π/2)·(√(Γ₀² + R·Γ_SD/π) + Γ₀)
/// which stays finite as R·Γ_SD → 0.
pub fn t2_from_sd(r_gamma_sd_hz2: f64, gamma0_hz: f64) -> Result<(f64, f64)> {
    if r_gamma_sd_hz2 < 0.0 || gamma0_hz < 0.0 {
        return Err(Error::InvalidInput(
            "R·Γ_SD and Γ₀ must be non-negative".into(),
        ));
    }
    if r_gamma_sd_hz2 == 0.0 && gamma0_hz == 0.0 {
        return Err(Error::UndefinedModel(
            "Γ is undefined at R·Γ_SD = 0 with Γ₀ = 0".into(),
        ));
    }
    let root = (gamma0_hz * gamma0_hz + r_gamma_sd_hz2 / std::f64::consts::PI).sqrt();
    let gamma = std::f64::consts::FRAC_PI_2 * (root + gamma0_hz);
    Ok((gamma, 1.0 / gamma))
}

/// Ground/excited populations of a two-level sub-ensemble at temperature T:
/// P↓ = 1/(1+e^{+T_Z/T}), P↑ = 1/(1+e^{−T_Z/T}).
pub fn boltzmann_populations(t_zeeman_k: f64, temperature_k: f64) -> (f64, f64) {
    if temperature_k == 0.0 {
        // T → 0 limit: fully polarised for T_Z > 0, equal at T_Z = 0.
        return if t_zeeman_k > 0.0 {
            (0.0, 1.0)
        } else {
            (0.5, 0.5)
        };
    }
    let x = t_zeeman_k / temperature_k;
    let down = 1.0 / (1.0 + x.exp());
    let up = 1.0 / (1.0 + (-x).exp());
    (down, up)
}

/// Overall temperature-dependent decoherence rate of the central spin:
///
/// Γ(T) = Γ_res + Σ_i √(π·μ₀³·μ_B⁶·g/(9√3·h³·Γ_i)) · √ξ·n_i^{3/2}·M_i /
///        [(1+e^{T_Z,i/T})(1+e^{−T_Z,i/T})]
///
/// with Γ_i the sub-ensemble linewidth (equal to the central linewidth when
/// the ensembles carry none of their own).
pub fn temperature_model(
    ctx: &CentralSpinContext,
    ensembles: &[SubEnsemble],
    temperature_k: f64,
    consts: &PhysicalConstants,
) -> Result<f64> {
    ctx.validate()?;
    if temperature_k <= 0.0 {
        return Err(Error::InvalidInput("temperature must be positive".into()));
    }
    let mut gamma = ctx.gamma_res_hz;
    for e in ensembles {
        e.validate()?;
        let linewidth = if e.linewidth_hz > 0.0 {
            e.linewidth_hz
        } else {
            ctx.linewidth_hz
        };
        let prefactor =
            (std::f64::consts::PI * consts.mu_0.powi(3) * consts.mu_b.powi(6) * ctx.g_eff
                / (NINE_SQRT3 * consts.h.powi(3) * linewidth))
                .sqrt();
        let tz = e.zeeman_temperature(consts);
        let (p_down, p_up) = boltzmann_populations(tz, temperature_k);
        // 1/[(1+e^x)(1+e^-x)] is exactly the population product P↓·P↑.
        gamma += prefactor
            * ctx.xi.sqrt()
            * e.density_per_m3.powf(1.5)
            * e.matrix_element
            * (p_down * p_up);
    }
    Ok(gamma)
}

/// How a bath class responds to the working field when an angular sweep moves
/// the operating point.
#[derive(Debug, Clone)]
pub enum BathSpec {
    /// Field-independent sub-ensemble, used as-is.
    Fixed(SubEnsemble),
    /// An electron-Zeeman-like pool (I = 0 isotopes): frequency, effective g
    /// and matrix element recomputed from `system` at each working field.
    ZeemanLike {
        label: String,
        density_per_m3: f64,
        linewidth_hz: f64,
        system: SpinSystem,
    },
}

impl BathSpec {
    /// Materialise the sub-ensemble at a working field.
    pub fn at_field(&self, b: &FieldVector, consts: &PhysicalConstants) -> Result<SubEnsemble> {
        match self {
            BathSpec::Fixed(e) => Ok(e.clone()),
            BathSpec::ZeemanLike {
                label,
                density_per_m3,
                linewidth_hz,
                system,
            } => {
                let direction = if b.magnitude() > 0.0 {
                    b.as_vector().normalize()
                } else {
                    nalgebra::Vector3::new(1.0, 0.0, 0.0)
                };
                let g = system.zeeman_g_along(direction);
                let f = g * consts.zeeman_slope() * b.magnitude();
                // Electron-like pool driven transverse to B.
                let b1 = spinham::default_b1(b);
                let row = system.g_tensor.transpose() * b1;
                // |<up| b1·g·S |down>| for the two-level Zeeman system equals
                // half the transverse component of the effective drive field.
                let m = transverse_matrix_element(row, direction);
                Ok(SubEnsemble {
                    label: label.clone(),
                    density_per_m3: *density_per_m3,
                    linewidth_hz: *linewidth_hz,
                    matrix_element: m,
                    frequency_hz: f,
                    g_eff: g,
                })
            }
        }
    }
}

/// |⟨↑|w·S|↓⟩| for a spin-1/2 quantised along `axis` and drive vector `w`:
/// half the magnitude of the component of w transverse to the axis.
fn transverse_matrix_element(w: nalgebra::Vector3<f64>, axis: nalgebra::Vector3<f64>) -> f64 {
    let a = axis.normalize();
    let parallel = w.dot(&a);
    let transverse = (w - a * parallel).norm();
    0.5 * transverse
}

/// T₂(θ) from a solved angular sweep: at each angle, every bath class is
/// re-evaluated at the working field and folded through the temperature
/// model with the probed transition's effective g.
pub fn angular_t2_model(
    ctx: &CentralSpinContext,
    baths: &[BathSpec],
    temperature_k: f64,
    sweep: &AngularSweep,
    consts: &PhysicalConstants,
) -> Result<Vec<(f64, f64, f64)>> {
    let mut out = Vec::new();
    for entry in &sweep.entries {
        // The measurement follows the branch the resonator drives hardest.
        let Some(sol) = entry.solutions.iter().max_by(|a, b| {
            a.transition
                .matrix_element
                .partial_cmp(&b.transition.matrix_element)
                .unwrap()
        }) else {
            continue;
        };
        let b = FieldVector::from_vector(sol.direction * sol.field_t);
        let mut ensembles = Vec::with_capacity(baths.len());
        for spec in baths {
            ensembles.push(spec.at_field(&b, consts)?);
        }
        let mut local = ctx.clone();
        if let Some(g) = sol.transition.g_eff {
            local.g_eff = g;
        }
        let gamma = temperature_model(&local, &ensembles, temperature_k, consts)?;
        out.push((entry.angle_deg, gamma, 1.0 / gamma));
    }
    Ok(out)
}

/// Builds the sub-ensemble table of one spin system at a working field: the
/// `count` strongest transitions (by matrix element) become sub-ensembles of
/// equal density, carrying their own frequency, matrix element and effective
/// g. For an I = 7/2 species at high field these are the electron flips of
/// the eight nuclear projections.
pub fn subensembles_from_transitions(
    sys: &SpinSystem,
    b: &FieldVector,
    count: usize,
    consts: &PhysicalConstants,
) -> Result<Vec<SubEnsemble>> {
    if count == 0 {
        return Err(Error::InvalidInput("count must be positive".into()));
    }
    let mut found = spinham::transitions(sys, b, None, 0.0, consts)?;
    found.sort_by(|a, b| b.matrix_element.partial_cmp(&a.matrix_element).unwrap());
    found.truncate(count);
    if found.is_empty() {
        return Err(Error::InvalidInput("system has no transitions".into()));
    }
    let density = sys.concentration_per_m3 * sys.abundance / found.len() as f64;
    Ok(found
        .into_iter()
        .map(|t| SubEnsemble {
            label: format!("{}_{}to{}", sys.label, t.lower, t.upper),
            density_per_m3: density,
            linewidth_hz: 0.0, // caller supplies or central linewidth applies
            matrix_element: t.matrix_element,
            frequency_hz: t.frequency,
            g_eff: t.g_eff.unwrap_or(0.0),
        })
        .collect())
}

/// ⁸⁹Y nuclear-bath spectral diffusion on a central spin.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Y89Bath {
    /// Spectral-diffusion linewidth Γ_SD,Y (Hz).
    pub gamma_sd_hz: f64,
    /// Nuclear flip-flop rate R_Y (Hz).
    pub rate_hz: f64,
    /// Product R_Y·Γ_SD,Y (Hz²).
    pub product_hz2: f64,
}

/// Method-of-moments estimate of ⁸⁹Y (I = 1/2) bath spectral diffusion:
///
/// Γ_SD,Y = 0.14·μ₀·γ_Y·g·μ_B·n_Y·√(I(I+1))·sech(h·γ_Y·B/2k_B·T)
/// R_Y    = 0.25·μ₀·h·γ_Y²·(n_Y/2)·√(I(I+1))·sech(h·γ_Y·B/2k_B·T)
///
/// `n_y_per_m3` is the yttrium density of the site class considered
/// (flip-flops within the same site).
pub fn y89_bath(
    g_central: f64,
    field_t: f64,
    temperature_k: f64,
    n_y_per_m3: f64,
    consts: &PhysicalConstants,
) -> Result<Y89Bath> {
    if g_central <= 0.0 || temperature_k <= 0.0 || n_y_per_m3 <= 0.0 || field_t < 0.0 {
        return Err(Error::InvalidInput(
            "y89_bath requires positive g, T, n_Y and non-negative B".into(),
        ));
    }
    let spin_factor = (0.5_f64 * 1.5).sqrt(); // sqrt(I(I+1)), I = 1/2
    let arg = consts.h * consts.gamma_y89 * field_t / (2.0 * consts.k_b * temperature_k);
    let s = sech(arg);
    let gamma_sd = 0.14
        * consts.mu_0
        * consts.gamma_y89
        * g_central
        * consts.mu_b
        * n_y_per_m3
        * spin_factor
        * s;
    let rate = 0.25
        * consts.mu_0
        * consts.h
        * consts.gamma_y89.powi(2)
        * (n_y_per_m3 / 2.0)
        * spin_factor
        * s;
    Ok(Y89Bath {
        gamma_sd_hz: gamma_sd,
        rate_hz: rate,
        product_hz2: gamma_sd * rate,
    })
}

/// Purcell-limited relaxation time T₁ = κ_s/(4·g₀²), both rates as angular
/// frequencies. Returns infinity for g₀ = 0.
pub fn purcell_t1(g0_rad_per_s: f64, kappa_rad_per_s: f64) -> Result<f64> {
    if g0_rad_per_s < 0.0 || kappa_rad_per_s <= 0.0 {
        return Err(Error::InvalidInput(
            "purcell_t1 requires g0 ≥ 0 and κ_s > 0".into(),
        ));
    }
    if g0_rad_per_s == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(kappa_rad_per_s / (4.0 * g0_rad_per_s * g0_rad_per_s))
}

/// Echo envelope with superhyperfine modulation at the ⁸⁹Y Larmor frequency:
/// A(τ) = A₀·e^{−2τ/T₂}·(1 − k·(1 − cos(2π·γ_Y·B·τ + φ))/2).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EseemParams {
    pub amplitude: f64,
    pub t2_s: f64,
    /// Modulation depth k in [0, 1].
    pub depth: f64,
    /// Static field (T); fixes the modulation frequency to γ_Y·B.
    pub field_t: f64,
    pub phase_rad: f64,
}

pub fn eseem_model(tau_s: f64, p: &EseemParams, consts: &PhysicalConstants) -> f64 {
    let f_mod = consts.gamma_y89 * p.field_t;
    let envelope = p.amplitude * (-2.0 * tau_s / p.t2_s).exp();
    let osc = 1.0
        - p.depth * (1.0 - (2.0 * std::f64::consts::PI * f_mod * tau_s + p.phase_rad).cos()) / 2.0;
    envelope * osc
}

fn sech(x: f64) -> f64 {
    // 2e^{-|x|}/(1+e^{-2|x|}) avoids overflow for large arguments.
    let e = (-x.abs()).exp();
    2.0 * e / (1.0 + e * e)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn consts() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    fn ensemble(n: f64, f: f64) -> SubEnsemble {
        SubEnsemble {
            label: "test".into(),
            density_per_m3: n,
            linewidth_hz: 8.7e6,
            matrix_element: 1.0,
            frequency_hz: f,
            g_eff: 2.0,
        }
    }

    #[test]
    fn id_t2_main_variant_matches_direct_arithmetic() {
        let c = consts();
        // Independent route: assemble the prefactor from raw constants.
        let expected = 9.0 * 3.0_f64.sqrt() * c.hbar
            / (std::f64::consts::PI * c.mu_0 * (2.0 * c.mu_b).powi(2) * 1e24);
        let got = id_t2(2.0, 1e24, IdVariant::Main, std::f64::consts::PI, &c).unwrap();
        assert_relative_eq!(got, expected, max_relative = 1e-14);
        assert_relative_eq!(got, 1.21e-6, max_relative = 1e-2);
    }

    #[test]
    fn id_t2_si_variant_diverges_without_refocusing() {
        let c = consts();
        let t2 = id_t2(2.0, 1e24, IdVariant::Si, 0.0, &c).unwrap();
        assert!(t2.is_infinite());
    }

    #[test]
    fn id_t2_zero_density_is_infinite() {
        let c = consts();
        assert!(id_t2(2.0, 0.0, IdVariant::Main, std::f64::consts::PI, &c)
            .unwrap()
            .is_infinite());
    }

    #[test]
    fn id_variants_differ_by_the_documented_factor() {
        let c = consts();
        let main = id_t2(2.0, 1e24, IdVariant::Main, std::f64::consts::PI, &c).unwrap();
        let si = id_t2(2.0, 1e24, IdVariant::Si, std::f64::consts::PI, &c).unwrap();
        // 8h/5 vs 9√3·ħ/π: ratio 16π/(45√3) ≈ 2.03.
        let expected = 8.0 * c.h / 5.0 / (9.0 * 3.0_f64.sqrt() * c.hbar / std::f64::consts::PI);
        assert_relative_eq!(si / main, expected, max_relative = 1e-12);
    }

    #[test]
    fn excited_fraction_limits() {
        let mut filter = ResonatorFilter {
            f0_hz: 5.04e9,
            pulse_length_s: 15e-6,
            line_fwhm_hz: 8.7e6,
            df_db_hz_per_t: 14e9,
        };
        // Far detuning kills the excited density.
        let near = excited_fraction(&filter, 0.0).unwrap();
        let far = excited_fraction(&filter, 0.5).unwrap();
        assert!(far < near * 1e-3);
        // A window much wider than the line admits everything.
        filter.pulse_length_s = 1e-12;
        let all = excited_fraction(&filter, 0.0).unwrap();
        assert!(all > 0.999, "wide-window fraction {all}");
    }

    #[test]
    fn excited_fraction_matches_quadrature_oracle() {
        // Independent oracle: fixed-grid trapezoid at high resolution.
        let filter = ResonatorFilter {
            f0_hz: 5.04e9,
            pulse_length_s: 7.5e-6, // 133 kHz window
            line_fwhm_hz: 8.7e6,
            df_db_hz_per_t: 14e9,
        };
        let sigma = filter.line_fwhm_hz / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
        let hwhm = filter.bandwidth_hz() / 2.0;
        let span = 12.0 * sigma;
        let n = 4_000_000usize;
        let dx = 2.0 * span / n as f64;
        let mut acc = 0.0;
        for k in 0..=n {
            let f = -span + k as f64 * dx;
            let g = (-f * f / (2.0 * sigma * sigma)).exp()
                / (sigma * (2.0 * std::f64::consts::PI).sqrt());
            let l = hwhm * hwhm / (f * f + hwhm * hwhm);
            let w = if k == 0 || k == n { 0.5 } else { 1.0 };
            acc += w * g * l * dx;
        }
        let got = excited_fraction(&filter, 0.0).unwrap();
        assert_relative_eq!(got, acc, max_relative = 1e-4);
    }

    #[test]
    fn id_profile_dips_at_line_center_and_scales_with_density() {
        let c = consts();
        let filter = ResonatorFilter {
            f0_hz: 5.04e9,
            pulse_length_s: 15e-6,
            line_fwhm_hz: 8.7e6,
            df_db_hz_per_t: 14e9,
        };
        let axis: Vec<f64> = (0..21).map(|k| 0.9 + 1e-4 * k as f64).collect();
        let prof = id_t2_profile(
            0.4,
            3.3e23,
            &filter,
            0.901,
            &axis,
            IdVariant::Main,
            std::f64::consts::PI,
            &c,
        )
        .unwrap();
        let min = prof
            .iter()
            .cloned()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
            .unwrap();
        assert!(
            (min.0 - 0.901).abs() < 2e-4,
            "minimum not at line centre: {min:?}"
        );
        assert!(prof.first().unwrap().1 > min.1);

        let doubled = id_t2_profile(
            0.4,
            6.6e23,
            &filter,
            0.901,
            &axis,
            IdVariant::Main,
            std::f64::consts::PI,
            &c,
        )
        .unwrap();
        for (a, b) in prof.iter().zip(doubled.iter()) {
            assert_relative_eq!(a.1, 2.0 * b.1, max_relative = 1e-9);
        }
    }

    #[test]
    fn flip_flop_rate_limits_and_scaling() {
        let c = consts();
        let e = ensemble(1e23, 5e9);
        let tz = e.zeeman_temperature(&c);
        // T_Z/T = 1 gives the sech²(1) = 0.4200 factor.
        let r1 = flip_flop_rate(&e, 1.0, tz, &c).unwrap();
        let rhot = flip_flop_rate(&e, 1.0, 1e9, &c).unwrap();
        assert_relative_eq!(r1 / rhot, 0.4200, max_relative = 1e-3);
        // Doubling the density quadruples the rate.
        let e2 = ensemble(2e23, 5e9);
        let r2 = flip_flop_rate(&e2, 1.0, tz, &c).unwrap();
        assert_relative_eq!(r2, 4.0 * r1, max_relative = 1e-12);
    }

    #[test]
    fn sd_linewidth_value_and_linearity() {
        let c = consts();
        let mut e = ensemble(1e24, 0.0); // T_Z = 0: sech² = 1
        e.g_eff = 2.0;
        let got = sd_linewidth(&e, 2.0, 0.1, &c).unwrap();
        let expected = std::f64::consts::PI * c.mu_0 * c.mu_b * c.mu_b
            / (9.0 * 3.0_f64.sqrt() * c.h)
            * 1e24
            * 4.0;
        assert_relative_eq!(got, expected, max_relative = 1e-12);
        // Linear in density.
        let mut half_density = e.clone();
        half_density.density_per_m3 = 5e23;
        let half = sd_linewidth(&half_density, 2.0, 0.1, &c).unwrap();
        assert_relative_eq!(got, 2.0 * half, max_relative = 1e-12);
    }

    #[test]
    fn frozen_bath_has_no_spectral_diffusion() {
        let c = consts();
        let e = ensemble(1e24, 5e9);
        let g = sd_linewidth(&e, 2.0, 1e-4, &c).unwrap();
        assert!(g < 1e-60, "frozen bath linewidth {g}");
    }

    #[test]
    fn t2_from_sd_reference_values() {
        let (_, t2) = t2_from_sd(3.5e6, 0.0).unwrap();
        assert!((t2 - 0.60e-3).abs() / 0.60e-3 < 0.02, "t2 = {t2}");
        let (_, t2) = t2_from_sd(1.3e5, 0.0).unwrap();
        assert!((t2 - 3.1e-3).abs() / 3.1e-3 < 0.03, "t2 = {t2}");
        let (_, t2) = t2_from_sd(1.05e5, 0.0).unwrap();
        assert!((t2 - 3.48e-3).abs() / 3.48e-3 < 0.01, "t2 = {t2}");
    }

    #[test]
    fn t2_from_sd_two_algebraic_routes_agree() {
        // Quotient form (RΓ/2)/(√(Γ₀²+RΓ/π) − Γ₀) against the rationalised form.
        for (rg, g0) in [(3.5e6, 0.0), (1.3e5, 120.0), (9e4, 55.0)] {
            let (gamma, _) = t2_from_sd(rg, g0).unwrap();
            if rg > 0.0 {
                let root = (g0 * g0 + rg / std::f64::consts::PI).sqrt();
                let direct = (rg / 2.0) / (root - g0);
                assert_relative_eq!(gamma, direct, max_relative = 1e-12);
            }
        }
        // Γ₀ = 0 closed form.
        let (gamma, t2) = t2_from_sd(1.3e5, 0.0).unwrap();
        assert_relative_eq!(
            gamma,
            (std::f64::consts::PI * 1.3e5).sqrt() / 2.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            t2,
            2.0 / (std::f64::consts::PI * 1.3e5).sqrt(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn t2_from_sd_undefined_case() {
        assert!(t2_from_sd(0.0, 0.0).is_err());
    }

    #[test]
    fn boltzmann_populations_identities() {
        let (d, u) = boltzmann_populations(0.0, 0.1);
        assert_eq!((d, u), (0.5, 0.5));
        for (tz, t) in [(0.24, 0.014), (0.05, 0.3), (1.0, 1.0)] {
            let (d, u) = boltzmann_populations(tz, t);
            assert_relative_eq!(d + u, 1.0, max_relative = 1e-14);
            let sech_half = sech(tz / (2.0 * t));
            assert_relative_eq!(d * u, 0.25 * sech_half * sech_half, max_relative = 1e-12);
        }
    }

    #[test]
    fn temperature_model_freezes_to_residual() {
        let c = consts();
        let ctx = CentralSpinContext {
            g_eff: 0.97,
            linewidth_hz: 8.7e6,
            gamma_res_hz: 100.0,
            xi: 6.0,
        };
        let ensembles = vec![ensemble(1e23, 5e9), ensemble(4e22, 2.4e9)];
        let cold = temperature_model(&ctx, &ensembles, 1e-4, &c).unwrap();
        assert_relative_eq!(cold, 100.0, max_relative = 1e-9);
        // Nondecreasing in temperature.
        let mut prev = cold;
        for t in [0.01, 0.05, 0.1, 0.5, 1.2, 10.0] {
            let g = temperature_model(&ctx, &ensembles, t, &c).unwrap();
            assert!(g >= prev - 1e-12, "Γ decreased at T = {t}");
            prev = g;
        }
        // Empty ensemble list returns the residual alone.
        assert_eq!(temperature_model(&ctx, &[], 0.5, &c).unwrap(), 100.0);
    }

    #[test]
    fn temperature_model_single_ensemble_matches_composition_oracle() {
        // Assemble Γ_res + √(π·R·Γ_SD)/2 from the standalone rate and
        // linewidth formulas, with their sech²(T_Z/T) factors replaced by
        // the Boltzmann population product P↓·P↑. The combined term then
        // equals the temperature-model term times (√π/2)·√g_i, which is
        // exactly 1 at g_i = 4/π.
        let c = consts();
        let compose = |e: &SubEnsemble, ctx: &CentralSpinContext, t: f64| {
            let tz = e.zeeman_temperature(&c);
            let (pd, pu) = boltzmann_populations(tz, t);
            let pop = pd * pu;
            let r = ctx.xi * c.mu_b.powi(4) * c.mu_0.powi(2) / c.h.powi(2)
                * e.matrix_element.powi(2)
                * e.density_per_m3.powi(2)
                / e.linewidth_hz
                * pop;
            let gsd = std::f64::consts::PI * c.mu_0 * c.mu_b.powi(2) / (NINE_SQRT3 * c.h)
                * e.density_per_m3
                * e.g_eff
                * ctx.g_eff
                * pop;
            (std::f64::consts::PI * r * gsd).sqrt() / 2.0
        };

        let mut e = ensemble(8e22, 5.04e9);
        e.g_eff = 4.0 / std::f64::consts::PI;
        let ctx = CentralSpinContext {
            g_eff: 0.973,
            linewidth_hz: e.linewidth_hz,
            gamma_res_hz: 40.0,
            xi: 12.0,
        };
        for t in [0.014, 0.05, 0.2, 1.2] {
            let model = temperature_model(&ctx, &[e.clone()], t, &c).unwrap();
            let oracle = ctx.gamma_res_hz + compose(&e, &ctx, t);
            assert_relative_eq!(model, oracle, max_relative = 1e-9);
        }

        // For any other g_i the two routes differ by the constant factor
        // (√π/2)·√g_i at every temperature.
        let mut e2 = e.clone();
        e2.g_eff = 2.0;
        let expected_ratio = std::f64::consts::PI.sqrt() / 2.0 * e2.g_eff.sqrt();
        for t in [0.02, 0.3, 1.0] {
            let model = temperature_model(&ctx, &[e2.clone()], t, &c).unwrap() - ctx.gamma_res_hz;
            let oracle = compose(&e2, &ctx, t);
            assert_relative_eq!(oracle / model, expected_ratio, max_relative = 1e-9);
        }
    }

    #[test]
    fn temperature_model_density_splitting_reduces_the_sum() {
        // n^{3/2} convexity: splitting one ensemble into two halves lowers Γ.
        let c = consts();
        let ctx = CentralSpinContext {
            g_eff: 1.0,
            linewidth_hz: 8.7e6,
            gamma_res_hz: 0.0,
            xi: 1.0,
        };
        let whole = temperature_model(&ctx, &[ensemble(1e23, 3e9)], 0.2, &c).unwrap();
        let halves =
            temperature_model(&ctx, &[ensemble(5e22, 3e9), ensemble(5e22, 3e9)], 0.2, &c).unwrap();
        assert!(halves < whole);
        assert_relative_eq!(halves, whole / 2.0_f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn y89_bath_is_even_in_b_and_vanishes_when_polarised() {
        let c = consts();
        let a = y89_bath(0.973, 0.37, 0.014, 9.35e27, &c).unwrap();
        // sech argument is even in B by construction; enormous B/T freezes it.
        let frozen = y89_bath(0.973, 5e4, 0.014, 9.35e27, &c).unwrap();
        assert!(frozen.gamma_sd_hz < a.gamma_sd_hz * 1e-10);
        assert!(frozen.rate_hz < a.rate_hz * 1e-10);
    }

    #[test]
    fn y89_bath_reference_operating_point() {
        let c = consts();
        // Per-site yttrium density; g from the probed transition at
        // 5.04 GHz / 370 mT.
        let b = y89_bath(0.9732, 0.37, 0.014, 9.35e27, &c).unwrap();
        assert!(
            (b.gamma_sd_hz - 38e3).abs() / 38e3 < 0.5,
            "Γ_SD,Y = {}",
            b.gamma_sd_hz
        );
        assert!((b.rate_hz - 3.6).abs() / 3.6 < 0.5, "R_Y = {}", b.rate_hz);
        assert!(
            (b.product_hz2 - 1.05e5).abs() / 1.05e5 < 0.3,
            "product = {}",
            b.product_hz2
        );
    }

    #[test]
    fn purcell_scaling_and_value() {
        let c = consts();
        let _ = c;
        let two_pi = 2.0 * std::f64::consts::PI;
        let t1 = purcell_t1(two_pi * 100.0, two_pi * 1e6).unwrap();
        // Oracle: κ/(4g²) assembled directly.
        let expected = (two_pi * 1e6) / (4.0 * (two_pi * 100.0).powi(2));
        assert_relative_eq!(t1, expected, max_relative = 1e-14);
        let quarter = purcell_t1(two_pi * 200.0, two_pi * 1e6).unwrap();
        assert_relative_eq!(quarter, t1 / 4.0, max_relative = 1e-12);
        assert!(purcell_t1(0.0, two_pi * 1e6).unwrap().is_infinite());
    }

    #[test]
    fn eseem_limits() {
        let c = consts();
        let p = EseemParams {
            amplitude: 1.0,
            t2_s: 1e-3,
            depth: 0.0,
            field_t: 1e-3,
            phase_rad: 0.0,
        };
        // k = 0: pure exponential.
        assert_relative_eq!(
            eseem_model(0.5e-3, &p, &c),
            (-1.0_f64).exp(),
            max_relative = 1e-12
        );
        // B = 0: zero-frequency modulation, envelope scaled by the phase term.
        let frozen = EseemParams {
            depth: 0.8,
            field_t: 0.0,
            ..p
        };
        let at0 = eseem_model(0.3e-3, &frozen, &c);
        let at1 = eseem_model(0.7e-3, &frozen, &c);
        assert_relative_eq!(
            at0 / at1,
            ((2.0 * (0.7 - 0.3) * 1e-3) / 1e-3_f64).exp(),
            max_relative = 1e-9
        );
        // 1 mT puts the modulation at the 2.095 kHz Larmor frequency: the
        // envelope dips to its first minimum half a period in.
        let modulated = EseemParams { depth: 1.0, ..p };
        let half_period = 0.5 / (c.gamma_y89 * 1e-3);
        let v = eseem_model(half_period, &modulated, &c);
        assert!(v.abs() < 1e-6, "expected node at half period, got {v}");
    }
}
