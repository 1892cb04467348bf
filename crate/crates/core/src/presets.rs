//! Built-in spin systems: literature tensors for ¹⁴⁵Nd and ¹⁷¹Yb (sites 1
//! and 2) in Y₂SiO₅, in the (D1, D2, b) frame, plus the sub-ensemble table
//! for a natural-abundance Yb sample.
//!
//! Densities use 1 ppm = 1.87e22 m⁻³ of Y sites (both crystallographic sites
//! counted; 9.35e27 m⁻³ per site).

use nalgebra::Matrix3;

use crate::decomodels::SubEnsemble;
use crate::spinham::SpinSystem;

/// Total Y site density in Y₂SiO₅, both sites, per m³.
pub const Y_SITE_DENSITY_PER_M3: f64 = 1.87e28;

/// Y density of a single crystallographic site, per m³.
pub const Y_SITE_DENSITY_SINGLE_SITE_PER_M3: f64 = Y_SITE_DENSITY_PER_M3 / 2.0;

/// Converts a dopant concentration in ppm (of all Y sites) to spins per m³.
pub fn ppm_to_per_m3(ppm: f64) -> f64 {
    ppm * 1e-6 * Y_SITE_DENSITY_PER_M3
}

/// ¹⁴⁵Nd³⁺:Y₂SiO₅ (I = 7/2), 200 ppm isotopically purified sample. The
/// g-matrix is tabulated asymmetric and is used verbatim; see
/// [`SpinSystem::with_symmetrized_g`] for the opt-in symmetrised variant.
pub fn nd145_yso() -> SpinSystem {
    SpinSystem {
        label: "Nd145_YSO".into(),
        electron_spin: 0.5,
        nuclear_spin: 3.5,
        g_tensor: Matrix3::new(
            1.30, 0.62, 0.22, //
            0.62, 0.22, -2.07, //
            1.62, 1.62, -2.86,
        ),
        a_tensor_mhz: Matrix3::new(
            -37.1, -99.9, -83.4, //
            -99.9, -589.2, 169.4, //
            -83.4, 169.4, -678.4,
        ),
        // mu(145Nd) = -0.656 mu_N, I = 7/2.
        g_n: -0.1875,
        include_nuclear_zeeman: false,
        concentration_per_m3: ppm_to_per_m3(200.0),
        abundance: 1.0,
        site: 1,
    }
}

/// ¹⁷¹Yb³⁺:Y₂SiO₅ site 1 (I = 1/2). Hyperfine entries are GHz-scale
/// (tabulated MHz carry a ×10³ factor). Concentration defaults to the
/// per-site ¹⁷¹ share of a 50 ppm natural-abundance sample (≈3.5 ppm).
pub fn yb171_site1() -> SpinSystem {
    SpinSystem {
        label: "Yb171_site1".into(),
        electron_spin: 0.5,
        nuclear_spin: 0.5,
        g_tensor: Matrix3::new(
            6.072, -1.46, -0.271, //
            -1.460, 1.845, -0.415, //
            -0.271, -0.415, 0.523,
        ),
        a_tensor_mhz: Matrix3::new(
            4.847e3, -1.232e3, -0.244e3, //
            -1.232e3, 1.425e3, -0.203e3, //
            -0.244e3, -0.203e3, 0.618e3,
        ),
        g_n: 0.98734,
        include_nuclear_zeeman: false,
        concentration_per_m3: ppm_to_per_m3(3.5),
        abundance: 0.143,
        site: 1,
    }
}

/// ¹⁷¹Yb³⁺:Y₂SiO₅ site 2 (I = 1/2), the system carrying the 2.370 GHz
/// zero-field clock transition. The (2,1) g entry is tabulated with a stray
/// "I" glyph and is read as −0.766.
pub fn yb171_site2() -> SpinSystem {
    SpinSystem {
        label: "Yb171_site2".into(),
        electron_spin: 0.5,
        nuclear_spin: 0.5,
        g_tensor: Matrix3::new(
            0.999, -0.766, -0.825, //
            -0.766, 0.825, -0.424, //
            0.825, -0.424, 5.867,
        ),
        a_tensor_mhz: Matrix3::new(
            0.686e3, -0.718e3, 0.492e3, //
            -0.718e3, 0.509e3, -0.496e3, //
            0.492e3, -0.496e3, 4.729e3,
        ),
        g_n: 0.98734,
        include_nuclear_zeeman: false,
        concentration_per_m3: ppm_to_per_m3(3.5),
        abundance: 0.143,
        site: 2,
    }
}

pub fn by_name(name: &str) -> Option<SpinSystem> {
    match name {
        "Nd145_YSO" => Some(nd145_yso()),
        "Yb171_site1" => Some(yb171_site1()),
        "Yb171_site2" => Some(yb171_site2()),
        _ => None,
    }
}

pub const PRESET_NAMES: [&str; 3] = ["Nd145_YSO", "Yb171_site1", "Yb171_site2"];

/// Sub-ensemble skeleton for a natural-abundance Yb sample at `total_ppm`:
/// the I = 0 isotope pool (0.70), ¹⁷¹Yb (0.143) and ¹⁷³Yb (0.161), each split
/// 50/50 over the two crystallographic sites. Frequencies, matrix elements
/// and effective g-factors are field-dependent and must be filled by the
/// caller; densities and linewidths are set here.
pub fn yb_nat_subensembles(total_ppm: f64, linewidth_hz: f64) -> Vec<SubEnsemble> {
    let isotopes = [("Yb_I0", 0.70), ("Yb171", 0.143), ("Yb173", 0.161)];
    let mut out = Vec::new();
    for (name, abundance) in isotopes {
        for site in [1u8, 2u8] {
            out.push(SubEnsemble {
                label: format!("{name}_site{site}"),
                density_per_m3: ppm_to_per_m3(total_ppm * abundance / 2.0),
                linewidth_hz,
                matrix_element: 1.0,
                frequency_hz: 0.0,
                g_eff: 2.0,
            });
        }
    }
    out
}
