//! The fit models: noise-floored decays, stimulated echoes with the
//! covariance-ridge product extraction, biexponential inversion recovery,
//! avoided crossings, field-sweep Gaussians and ESEEM envelopes.

use serde::{Deserialize, Serialize};

use crate::consts::PhysicalConstants;
use crate::fitkit::engine::{
    least_squares, FitResult, FittedParam, LeastSquaresOptions, MultiStart, Problem,
};
use crate::fitkit::{CrossingTrace, DecayTrace, StimEchoGrid};
use crate::{Error, Result};

/// A(τ) = √((A₀·e^{−2τ/T₂})² + C²): amplitude-detected decay above a noise
/// floor. `fixed_noise` freezes C to a separately measured value.
pub fn fit_decay_noise_floor(trace: &DecayTrace, fixed_noise: Option<f64>) -> Result<FitResult> {
    trace.validate()?;
    let taus = trace.tau_s.clone();
    let span = taus.last().unwrap() - taus[0];
    let tail = tail_mean(&trace.amplitude_v);
    let c0 = fixed_noise.unwrap_or(tail.max(1e-12));
    let a0 = (trace.amplitude_v[0].powi(2) - c0 * c0).max(1e-12).sqrt();

    let model_all = move |p: &[f64], out: &mut [f64], c: f64| {
        for (k, o) in out.iter_mut().enumerate() {
            let s = p[0] * (-2.0 * taus[k] / p[1]).exp();
            *o = (s * s + c * c).sqrt();
        }
    };

    match fixed_noise {
        Some(c) => {
            let model = move |p: &[f64], out: &mut [f64]| model_all(p, out, c);
            let problem = Problem {
                model: &model,
                observations: &trace.amplitude_v,
                sigma: trace.sigma_v.as_deref(),
                names: vec!["A0".into(), "T2".into()],
                bounds: vec![(0.0, f64::INFINITY), (span * 1e-4, f64::INFINITY)],
            };
            least_squares(&problem, &[a0, span / 2.0], &LeastSquaresOptions::default())
        }
        None => {
            let model = move |p: &[f64], out: &mut [f64]| model_all(p, out, p[2]);
            let problem = Problem {
                model: &model,
                observations: &trace.amplitude_v,
                sigma: trace.sigma_v.as_deref(),
                names: vec!["A0".into(), "T2".into(), "C".into()],
                bounds: vec![
                    (0.0, f64::INFINITY),
                    (span * 1e-4, f64::INFINITY),
                    (0.0, f64::INFINITY),
                ],
            };
            least_squares(
                &problem,
                &[a0, span / 2.0, c0],
                &LeastSquaresOptions::default(),
            )
        }
    }
}

/// Stimulated-echo amplitude surface:
/// A(τ, T_w) = A₀·exp[−(T_w/T₁ + 2π·τ·(Γ₀ + ½Γ_SD·(R·τ + 1 − e^{−R·T_w})))].
pub fn stimulated_echo_amplitude(
    a0: f64,
    r: f64,
    gamma_sd: f64,
    gamma0: f64,
    t1: f64,
    tau: f64,
    tw: f64,
) -> f64 {
    let gamma_eff = gamma0 + 0.5 * gamma_sd * (r * tau + 1.0 - (-r * tw).exp());
    a0 * (-(tw / t1 + 2.0 * std::f64::consts::PI * tau * gamma_eff)).exp()
}

/// Fits (A₀, R, Γ_SD) to a stimulated-echo grid with Γ₀ frozen (zero in the
/// measured regime). R and Γ_SD ride a covariance ridge; the product R·Γ_SD
/// is appended as a derived parameter with its much smaller propagated
/// uncertainty.
pub fn fit_stimulated(grid: &StimEchoGrid, gamma0: f64, seed: u64) -> Result<FitResult> {
    grid.validate()?;
    let t1 = grid.t1_s;
    let pts = grid.points.clone();
    let amps: Vec<f64> = pts.iter().map(|p| p.2).collect();

    // Log-parameterised rates keep the ridge search positive and make the
    // product uncertainty a sum of log-variances.
    let model = move |p: &[f64], out: &mut [f64]| {
        let (a0, r, gsd) = (p[0], p[1].exp(), p[2].exp());
        for (k, o) in out.iter_mut().enumerate() {
            let (tau, tw, _) = pts[k];
            *o = stimulated_echo_amplitude(a0, r, gsd, gamma0, t1, tau, tw);
        }
    };

    let a0_guess = amps.iter().cloned().fold(f64::MIN, f64::max).max(1e-12);
    let tw_mid = median(grid.points.iter().map(|p| p.1));
    let tau_mid = median(grid.points.iter().map(|p| p.0));
    let r0 = (1.0 / tw_mid).max(1e-3);
    // Seed Γ_SD from the overall τ decay scale.
    let gsd0 = (1.0 / (2.0 * std::f64::consts::PI * tau_mid)).max(1e-3);

    let problem = Problem {
        model: &model,
        observations: &amps,
        sigma: None,
        names: vec!["A0".into(), "ln_R".into(), "ln_Gamma_SD".into()],
        bounds: vec![(0.0, f64::INFINITY), (-30.0, 30.0), (-30.0, 30.0)],
    };
    let opts = LeastSquaresOptions {
        multi_start: Some(MultiStart {
            starts: 12,
            seed,
            spread: 1.2,
        }),
        ..Default::default()
    };
    let fit = least_squares(&problem, &[a0_guess, r0.ln(), gsd0.ln()], &opts)?;
    Ok(with_rate_params(fit))
}

/// Converts the internal (A0, ln R, ln Γ_SD) result into natural-unit
/// parameters and appends the ridge product R·Γ_SD.
fn with_rate_params(fit: FitResult) -> FitResult {
    let a0 = fit.params[0].clone();
    let ln_r = &fit.params[1];
    let ln_g = &fit.params[2];
    let r = ln_r.value.exp();
    let g = ln_g.value.exp();
    let var_lr = fit.covariance[1][1];
    let var_lg = fit.covariance[2][2];
    let cov_lrg = fit.covariance[1][2];
    let var_ln_product = (var_lr + var_lg + 2.0 * cov_lrg).max(0.0);
    let product = r * g;

    let mut out = fit.clone();
    out.params = vec![
        a0,
        FittedParam {
            name: "R".into(),
            value: r,
            sigma: r * var_lr.max(0.0).sqrt(),
        },
        FittedParam {
            name: "Gamma_SD".into(),
            value: g,
            sigma: g * var_lg.max(0.0).sqrt(),
        },
        FittedParam {
            name: "R_Gamma_SD".into(),
            value: product,
            sigma: product * var_ln_product.sqrt(),
        },
    ];
    out
}

/// One row of the ridge scan: the fixed parameter, the refit of the other,
/// the fit quality and the product.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CovarianceScanRow {
    pub fixed_param: String,
    pub fixed_value: f64,
    pub best_other: f64,
    pub r_squared: f64,
    pub product: f64,
}

/// Fixes Γ_SD (then R) at each listed value and refits the remaining
/// parameters. Along the covariance ridge the r² stays near 1 while the
/// individual rates drift; the product is the stable observable, summarised
/// by its median over the r² > 0.99 region.
pub fn covariance_scan(
    grid: &StimEchoGrid,
    gamma0: f64,
    fixed_gamma_sd: &[f64],
    fixed_r: &[f64],
) -> Result<(Vec<CovarianceScanRow>, Option<f64>)> {
    grid.validate()?;
    let mut rows = Vec::new();
    for &gsd in fixed_gamma_sd {
        if gsd <= 0.0 {
            return Err(Error::InvalidInput(
                "fixed Γ_SD values must be positive".into(),
            ));
        }
        let fit = fit_with_fixed(grid, gamma0, FixedRate::GammaSd(gsd))?;
        let r = fit.value("R").unwrap();
        rows.push(CovarianceScanRow {
            fixed_param: "Gamma_SD".into(),
            fixed_value: gsd,
            best_other: r,
            r_squared: fit.r_squared,
            product: r * gsd,
        });
    }
    for &r in fixed_r {
        if r <= 0.0 {
            return Err(Error::InvalidInput(
                "fixed R values must be positive".into(),
            ));
        }
        let fit = fit_with_fixed(grid, gamma0, FixedRate::R(r))?;
        let gsd = fit.value("Gamma_SD").unwrap();
        rows.push(CovarianceScanRow {
            fixed_param: "R".into(),
            fixed_value: r,
            best_other: gsd,
            r_squared: fit.r_squared,
            product: r * gsd,
        });
    }
    let mut ridge: Vec<f64> = rows
        .iter()
        .filter(|row| row.r_squared > 0.99)
        .map(|row| row.product)
        .collect();
    ridge.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let estimate = if ridge.is_empty() {
        None
    } else {
        Some(ridge[ridge.len() / 2])
    };
    Ok((rows, estimate))
}

enum FixedRate {
    R(f64),
    GammaSd(f64),
}

fn fit_with_fixed(grid: &StimEchoGrid, gamma0: f64, fixed: FixedRate) -> Result<FitResult> {
    let t1 = grid.t1_s;
    let pts = grid.points.clone();
    let amps: Vec<f64> = pts.iter().map(|p| p.2).collect();
    let a0_guess = amps.iter().cloned().fold(f64::MIN, f64::max).max(1e-12);
    let tw_mid = median(grid.points.iter().map(|p| p.1));
    let tau_mid = median(grid.points.iter().map(|p| p.0));

    let (fixed_is_r, fixed_value) = match fixed {
        FixedRate::R(v) => (true, v),
        FixedRate::GammaSd(v) => (false, v),
    };
    let model = move |p: &[f64], out: &mut [f64]| {
        let a0 = p[0];
        let free = p[1].exp();
        let (r, gsd) = if fixed_is_r {
            (fixed_value, free)
        } else {
            (free, fixed_value)
        };
        for (k, o) in out.iter_mut().enumerate() {
            let (tau, tw, _) = pts[k];
            *o = stimulated_echo_amplitude(a0, r, gsd, gamma0, t1, tau, tw);
        }
    };
    let free0 = if fixed_is_r {
        (1.0 / (2.0 * std::f64::consts::PI * tau_mid)).max(1e-3)
    } else {
        (1.0 / tw_mid).max(1e-3)
    };
    let free_name = if fixed_is_r { "ln_Gamma_SD" } else { "ln_R" };
    let problem = Problem {
        model: &model,
        observations: &amps,
        sigma: None,
        names: vec!["A0".into(), free_name.into()],
        bounds: vec![(0.0, f64::INFINITY), (-30.0, 30.0)],
    };
    let opts = LeastSquaresOptions {
        multi_start: Some(MultiStart {
            starts: 8,
            seed: 7,
            spread: 1.2,
        }),
        ..Default::default()
    };
    let fit = least_squares(&problem, &[a0_guess, free0.ln()], &opts)?;

    let mut out = fit.clone();
    let free = fit.params[1].value.exp();
    let sig = free * fit.covariance[1][1].max(0.0).sqrt();
    let name = if fixed_is_r { "Gamma_SD" } else { "R" };
    out.params = vec![
        fit.params[0].clone(),
        FittedParam {
            name: name.into(),
            value: free,
            sigma: sig,
        },
    ];
    Ok(out)
}

/// Inversion recovery with a continuum of Purcell-enhanced rates collapsed
/// onto two exponentials; echoes are amplitude-detected, hence the modulus:
/// A(t) = |A_f·e^{−t/T1f} + A_s·e^{−t/T1s} + offset|.
/// Ordering T1f < T1s is enforced on output; near-degenerate or vanishing
/// components are flagged in the message, not failed.
pub fn fit_biexponential_t1(trace: &DecayTrace) -> Result<FitResult> {
    trace.validate()?;
    let ts = trace.tau_s.clone();
    let span = ts.last().unwrap() - ts[0];
    let amax = trace
        .amplitude_v
        .iter()
        .cloned()
        .fold(f64::MIN, f64::max)
        .max(1e-12);
    let offset0 = tail_mean(&trace.amplitude_v);

    let model = move |p: &[f64], out: &mut [f64]| {
        for (k, o) in out.iter_mut().enumerate() {
            let v = p[0] * (-ts[k] / p[1]).exp() + p[2] * (-ts[k] / p[3]).exp() + p[4];
            *o = v.abs();
        }
    };
    let problem = Problem {
        model: &model,
        observations: &trace.amplitude_v,
        sigma: trace.sigma_v.as_deref(),
        names: vec![
            "A_fast".into(),
            "T1_fast".into(),
            "A_slow".into(),
            "T1_slow".into(),
            "offset".into(),
        ],
        bounds: vec![
            (f64::NEG_INFINITY, f64::INFINITY),
            (span * 1e-5, f64::INFINITY),
            (f64::NEG_INFINITY, f64::INFINITY),
            (span * 1e-5, f64::INFINITY),
            (f64::NEG_INFINITY, f64::INFINITY),
        ],
    };
    let p0 = [-amax, span / 50.0, -amax / 3.0, span / 5.0, offset0];
    let opts = LeastSquaresOptions {
        multi_start: Some(MultiStart {
            starts: 16,
            seed: 11,
            spread: 1.5,
        }),
        ..Default::default()
    };
    let mut fit = least_squares(&problem, &p0, &opts)?;

    // A single-exponential recovery explaining the data equally well means
    // the second component is unidentifiable.
    let ts2 = trace.tau_s.clone();
    let single_model = move |p: &[f64], out: &mut [f64]| {
        for (k, o) in out.iter_mut().enumerate() {
            *o = (p[0] * (-ts2[k] / p[1]).exp() + p[2]).abs();
        }
    };
    let single_problem = Problem {
        model: &single_model,
        observations: &trace.amplitude_v,
        sigma: trace.sigma_v.as_deref(),
        names: vec!["A".into(), "T1".into(), "offset".into()],
        bounds: vec![
            (f64::NEG_INFINITY, f64::INFINITY),
            (span * 1e-5, f64::INFINITY),
            (f64::NEG_INFINITY, f64::INFINITY),
        ],
    };
    let single_opts = LeastSquaresOptions {
        multi_start: Some(MultiStart {
            starts: 8,
            seed: 13,
            spread: 1.2,
        }),
        ..Default::default()
    };
    let single_fit_ok = least_squares(
        &single_problem,
        &[-amax, span / 10.0, offset0],
        &single_opts,
    )
    .map(|s| s.rss <= fit.rss * (1.0 + 1e-3) + 1e-30)
    .unwrap_or(false);
    if single_fit_ok {
        fit.message
            .push_str("degenerate: a single exponential fits equally well; ");
    }

    // Enforce T1_fast < T1_slow by swapping the component labels.
    let t_fast = fit.params[1].value;
    let t_slow = fit.params[3].value;
    if t_fast > t_slow {
        fit.params.swap(0, 2);
        fit.params.swap(1, 3);
        fit.params[0].name = "A_fast".into();
        fit.params[1].name = "T1_fast".into();
        fit.params[2].name = "A_slow".into();
        fit.params[3].name = "T1_slow".into();
        for row in fit.covariance.iter_mut() {
            row.swap(0, 2);
            row.swap(1, 3);
        }
        fit.covariance.swap(0, 2);
        fit.covariance.swap(1, 3);
    }
    let a_f = fit.params[0].value;
    let a_s = fit.params[2].value;
    let t_f = fit.params[1].value;
    let t_s = fit.params[3].value;
    if a_s.abs() < 1e-3 * a_f.abs() {
        fit.message
            .push_str("degenerate: slow component amplitude ~ 0; ");
    }
    if (t_s - t_f).abs() < 0.05 * t_s {
        fit.message.push_str("degenerate: rates nearly equal; ");
    }
    Ok(fit)
}

/// How the field-to-frequency slope enters the avoided-crossing fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum SlopeSpec {
    /// df/dB known from spin-Hamiltonian simulation or a separate sweep.
    Fixed(f64),
    /// Fit the slope, starting from this guess.
    Fit(f64),
}

/// Simultaneous dispersive-shift/linewidth fit across an avoided crossing:
///
/// f(B) = f₀ − g²·Δ/(Δ² + γ²),  κ(B) = κ₀ + g²·γ/(Δ² + γ²),
/// Δ = (df/dB)·(B − B₀).
///
/// Both residual blocks are in Hz so unit weights apply. The cooperativity
/// C = g²/(κ₀·γ) is appended as a derived parameter.
pub fn fit_avoided_crossing(trace: &CrossingTrace, slope: SlopeSpec) -> Result<FitResult> {
    trace.validate()?;
    let pts = trace.points.clone();
    let n = pts.len();
    let mut observations = Vec::with_capacity(2 * n);
    observations.extend(pts.iter().map(|p| p.1));
    observations.extend(pts.iter().map(|p| p.2));

    // Heuristics from the data shape: κ peaks on resonance, f is shifted
    // antisymmetrically around it.
    let (b_at_kmax, kappa_max) = pts
        .iter()
        .map(|p| (p.0, p.2))
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .unwrap();
    let kappa0_guess = pts.iter().map(|p| p.2).fold(f64::MAX, f64::min).max(1.0);
    let f0_guess = 0.5 * (pts.first().unwrap().1 + pts.last().unwrap().1);
    let b_span = (pts.last().unwrap().0 - pts[0].0).abs();

    let fit_slope = matches!(slope, SlopeSpec::Fit(_));
    let slope_value = match slope {
        SlopeSpec::Fixed(v) | SlopeSpec::Fit(v) => v,
    };
    if slope_value == 0.0 || !slope_value.is_finite() {
        return Err(Error::InvalidInput(
            "df/dB must be nonzero and finite".into(),
        ));
    }
    let gamma_guess = (0.1 * b_span * slope_value.abs()).max(1.0);
    let g_guess = ((kappa_max - kappa0_guess).max(1.0) * gamma_guess).sqrt();

    let model = move |p: &[f64], out: &mut [f64]| {
        let (f0, k0, g, gamma, b0) = (p[0], p[1], p[2], p[3], p[4]);
        let dfdb = if fit_slope { p[5] } else { slope_value };
        let g2 = g * g;
        for (k, &(b, _, _)) in pts.iter().enumerate() {
            let delta = dfdb * (b - b0);
            let denom = delta * delta + gamma * gamma;
            out[k] = f0 - g2 * delta / denom;
            out[n + k] = k0 + g2 * gamma / denom;
        }
    };

    let mut names = vec![
        "f0".into(),
        "kappa0".into(),
        "g_ens".into(),
        "gamma".into(),
        "B0".into(),
    ];
    let mut bounds = vec![
        (0.0, f64::INFINITY),
        (0.0, f64::INFINITY),
        (0.0, f64::INFINITY),
        (1.0, f64::INFINITY),
        (f64::NEG_INFINITY, f64::INFINITY),
    ];
    let mut p0 = vec![f0_guess, kappa0_guess, g_guess, gamma_guess, b_at_kmax];
    if fit_slope {
        names.push("df_dB".into());
        bounds.push((f64::NEG_INFINITY, f64::INFINITY));
        p0.push(slope_value);
    }

    let problem = Problem {
        model: &model,
        observations: &observations,
        sigma: None,
        names,
        bounds,
    };
    let opts = LeastSquaresOptions {
        multi_start: Some(MultiStart {
            starts: 8,
            seed: 23,
            spread: 0.8,
        }),
        ..Default::default()
    };
    let mut fit = least_squares(&problem, &p0, &opts)?;

    // Cooperativity with first-order error propagation over (κ0, g, γ).
    let k0 = fit.value("kappa0").unwrap();
    let g = fit.value("g_ens").unwrap();
    let gamma = fit.value("gamma").unwrap();
    if k0 > 0.0 && gamma > 0.0 {
        let c = g * g / (k0 * gamma);
        let grad = [
            (1usize, -c / k0),     // d/dκ0
            (2usize, 2.0 * c / g), // d/dg
            (3usize, -c / gamma),  // d/dγ
        ];
        let mut var = 0.0;
        for &(i, di) in &grad {
            for &(j, dj) in &grad {
                var += di * dj * fit.covariance[i][j];
            }
        }
        fit.params.push(FittedParam {
            name: "C".into(),
            value: c,
            sigma: var.max(0.0).sqrt(),
        });
    }
    Ok(fit)
}

/// Gaussian echo-intensity profile with a constant background:
/// A(B) = amp·exp(−(B − B₀)²/(2σ²)) + bg, σ = FWHM/(2√(2 ln 2)).
/// `fixed_fwhm` freezes the linewidth to (spin linewidth)/(df/dB).
pub fn fit_field_sweep_gaussian(trace: &DecayTrace, fixed_fwhm: Option<f64>) -> Result<FitResult> {
    // The trace carries (B, max echo) pairs; the DecayTrace invariants
    // (strictly increasing abscissa, finite values) are the right ones.
    trace.validate()?;
    let bs = trace.tau_s.clone();
    let amax_idx = trace
        .amplitude_v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(k, _)| k)
        .unwrap();
    let bg0 = 0.5 * (trace.amplitude_v[0] + trace.amplitude_v.last().unwrap());
    let amp0 = (trace.amplitude_v[amax_idx] - bg0).max(1e-12);
    let center0 = bs[amax_idx];
    let span = bs.last().unwrap() - bs[0];

    let to_sigma = 1.0 / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let gauss = move |amp: f64, c: f64, fwhm: f64, bg: f64, b: f64| {
        let s = fwhm * to_sigma;
        amp * (-(b - c) * (b - c) / (2.0 * s * s)).exp() + bg
    };

    match fixed_fwhm {
        Some(fwhm) => {
            if fwhm <= 0.0 {
                return Err(Error::InvalidInput("frozen FWHM must be positive".into()));
            }
            let model = move |p: &[f64], out: &mut [f64]| {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = gauss(p[0], p[1], fwhm, p[2], bs[k]);
                }
            };
            let problem = Problem {
                model: &model,
                observations: &trace.amplitude_v,
                sigma: trace.sigma_v.as_deref(),
                names: vec!["amplitude".into(), "center".into(), "background".into()],
                bounds: vec![
                    (0.0, f64::INFINITY),
                    (f64::NEG_INFINITY, f64::INFINITY),
                    (f64::NEG_INFINITY, f64::INFINITY),
                ],
            };
            least_squares(
                &problem,
                &[amp0, center0, bg0],
                &LeastSquaresOptions::default(),
            )
        }
        None => {
            let model = move |p: &[f64], out: &mut [f64]| {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = gauss(p[0], p[1], p[2], p[3], bs[k]);
                }
            };
            let problem = Problem {
                model: &model,
                observations: &trace.amplitude_v,
                sigma: trace.sigma_v.as_deref(),
                names: vec![
                    "amplitude".into(),
                    "center".into(),
                    "fwhm".into(),
                    "background".into(),
                ],
                bounds: vec![
                    (0.0, f64::INFINITY),
                    (f64::NEG_INFINITY, f64::INFINITY),
                    (span * 1e-4, f64::INFINITY),
                    (f64::NEG_INFINITY, f64::INFINITY),
                ],
            };
            least_squares(
                &problem,
                &[amp0, center0, span / 5.0, bg0],
                &LeastSquaresOptions::default(),
            )
        }
    }
}

/// Damped-cosine echo envelope with the modulation frequency pinned to the
/// ⁸⁹Y Larmor frequency γ_Y·B. Rejects B = 0 where the modulation period
/// diverges and no envelope can be recovered.
pub fn fit_eseem(
    trace: &DecayTrace,
    field_t: f64,
    consts: &PhysicalConstants,
) -> Result<FitResult> {
    trace.validate()?;
    if field_t == 0.0 {
        return Err(Error::ZeroModulationFrequency);
    }
    let f_mod = consts.gamma_y89 * field_t.abs();
    let taus = trace.tau_s.clone();
    let span = taus.last().unwrap() - taus[0];
    let a0 = trace.amplitude_v[0].max(1e-12);

    let model = move |p: &[f64], out: &mut [f64]| {
        let (a0, t2, depth, phase) = (p[0], p[1], p[2], p[3]);
        for (k, o) in out.iter_mut().enumerate() {
            let env = a0 * (-2.0 * taus[k] / t2).exp();
            let osc = 1.0
                - depth * (1.0 - (2.0 * std::f64::consts::PI * f_mod * taus[k] + phase).cos())
                    / 2.0;
            *o = env * osc;
        }
    };
    let problem = Problem {
        model: &model,
        observations: &trace.amplitude_v,
        sigma: trace.sigma_v.as_deref(),
        names: vec!["A0".into(), "T2".into(), "depth".into(), "phase".into()],
        bounds: vec![
            (0.0, f64::INFINITY),
            (span * 1e-4, f64::INFINITY),
            (0.0, 1.0),
            (-std::f64::consts::PI, std::f64::consts::PI),
        ],
    };
    let opts = LeastSquaresOptions {
        multi_start: Some(MultiStart {
            starts: 6,
            seed: 5,
            spread: 0.6,
        }),
        ..Default::default()
    };
    least_squares(&problem, &[a0, span / 2.0, 0.5, 0.0], &opts)
}

fn tail_mean(values: &[f64]) -> f64 {
    let n = values.len();
    let k = (n / 10).max(1);
    values[n - k..].iter().sum::<f64>() / k as f64
}

fn median(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}
