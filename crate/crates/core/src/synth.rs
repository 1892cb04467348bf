//! Seeded synthetic-data generators for round-trip testing of the fit
//! models. Every generator requires an explicit seed; identical inputs give
//! bit-identical traces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::consts::PhysicalConstants;
use crate::decomodels::{eseem_model, EseemParams};
use crate::fitkit::{stimulated_echo_amplitude, CrossingTrace, DecayTrace, StimEchoGrid};
use crate::{Error, Result};

fn noise(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).unwrap().sample(rng)
}

/// Noise standard deviation for a given signal scale and SNR; SNR = 0 means
/// noiseless.
fn sigma_from_snr(scale: f64, snr: f64) -> Result<f64> {
    if snr < 0.0 {
        return Err(Error::InvalidInput("SNR must be non-negative".into()));
    }
    Ok(if snr == 0.0 { 0.0 } else { scale / snr })
}

/// Two-pulse decay over a noise floor: √((A₀e^{−2τ/T₂})² + C²) + η.
pub fn decay_trace(
    a0: f64,
    t2_s: f64,
    noise_floor: f64,
    tau_s: &[f64],
    snr: f64,
    seed: u64,
) -> Result<DecayTrace> {
    let sigma = sigma_from_snr(a0, snr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps = tau_s
        .iter()
        .map(|&tau| {
            let s = a0 * (-2.0 * tau / t2_s).exp();
            (s * s + noise_floor * noise_floor).sqrt() + noise(&mut rng, sigma)
        })
        .collect();
    DecayTrace::new(tau_s.to_vec(), amps)
}

/// Stimulated-echo grid over the (τ, T_w) product grid.
#[allow(clippy::too_many_arguments)]
pub fn stimulated_grid(
    a0: f64,
    r: f64,
    gamma_sd: f64,
    gamma0: f64,
    t1_s: f64,
    taus_s: &[f64],
    tws_s: &[f64],
    snr: f64,
    seed: u64,
) -> Result<StimEchoGrid> {
    let sigma = sigma_from_snr(a0, snr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(taus_s.len() * tws_s.len());
    for &tau in taus_s {
        for &tw in tws_s {
            let a = stimulated_echo_amplitude(a0, r, gamma_sd, gamma0, t1_s, tau, tw)
                + noise(&mut rng, sigma);
            points.push((tau, tw, a));
        }
    }
    let grid = StimEchoGrid { points, t1_s };
    grid.validate()?;
    Ok(grid)
}

/// Dispersive shift and linewidth across an avoided crossing. Frequency
/// noise scales with the peak dispersive shift; linewidth noise scales with
/// the local κ (fractional readout error).
#[allow(clippy::too_many_arguments)]
pub fn crossing_trace(
    f0: f64,
    kappa0: f64,
    g_ens: f64,
    gamma: f64,
    b0: f64,
    slope_hz_per_t: f64,
    field_axis_t: &[f64],
    snr: f64,
    seed: u64,
) -> Result<CrossingTrace> {
    let shift_scale = g_ens * g_ens / (2.0 * gamma);
    let sigma_f = sigma_from_snr(shift_scale, snr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = field_axis_t
        .iter()
        .map(|&b| {
            let delta = slope_hz_per_t * (b - b0);
            let denom = delta * delta + gamma * gamma;
            let f = f0 - g_ens * g_ens * delta / denom + noise(&mut rng, sigma_f);
            let k_model = kappa0 + g_ens * g_ens * gamma / denom;
            let sigma_k = if snr == 0.0 { 0.0 } else { k_model / snr };
            let k = k_model + noise(&mut rng, sigma_k);
            (b, f, k)
        })
        .collect();
    let trace = CrossingTrace {
        points,
        slope_hz_per_t: Some(slope_hz_per_t),
    };
    trace.validate()?;
    Ok(trace)
}

/// Biexponential inversion recovery, amplitude-detected (modulus).
#[allow(clippy::too_many_arguments)]
pub fn inversion_recovery_trace(
    a_fast: f64,
    t1_fast: f64,
    a_slow: f64,
    t1_slow: f64,
    offset: f64,
    t_s: &[f64],
    snr: f64,
    seed: u64,
) -> Result<DecayTrace> {
    let scale = a_fast.abs() + a_slow.abs();
    let sigma = sigma_from_snr(scale, snr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps = t_s
        .iter()
        .map(|&t| {
            let v = a_fast * (-t / t1_fast).exp() + a_slow * (-t / t1_slow).exp() + offset;
            v.abs() + noise(&mut rng, sigma)
        })
        .collect();
    DecayTrace::new(t_s.to_vec(), amps)
}

/// Gaussian max-echo field profile over a constant background.
#[allow(clippy::too_many_arguments)]
pub fn field_sweep_trace(
    amplitude: f64,
    center_t: f64,
    fwhm_t: f64,
    background: f64,
    field_axis_t: &[f64],
    snr: f64,
    seed: u64,
) -> Result<DecayTrace> {
    let sigma_noise = sigma_from_snr(amplitude, snr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = fwhm_t / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let amps = field_axis_t
        .iter()
        .map(|&b| {
            amplitude * (-(b - center_t) * (b - center_t) / (2.0 * s * s)).exp()
                + background
                + noise(&mut rng, sigma_noise)
        })
        .collect();
    DecayTrace::new(field_axis_t.to_vec(), amps)
}

/// Echo decay with ⁸⁹Y superhyperfine modulation.
#[allow(clippy::too_many_arguments)]
pub fn eseem_trace(
    a0: f64,
    t2_s: f64,
    depth: f64,
    phase_rad: f64,
    field_t: f64,
    tau_s: &[f64],
    snr: f64,
    seed: u64,
    consts: &PhysicalConstants,
) -> Result<DecayTrace> {
    let sigma = sigma_from_snr(a0, snr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = EseemParams {
        amplitude: a0,
        t2_s,
        depth,
        field_t,
        phase_rad,
    };
    let amps = tau_s
        .iter()
        .map(|&tau| eseem_model(tau, &params, consts) + noise(&mut rng, sigma))
        .collect();
    DecayTrace::new(tau_s.to_vec(), amps)
}

/// Evenly spaced grid helper, inclusive of both ends.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![start];
    }
    (0..n)
        .map(|k| start + (stop - start) * k as f64 / (n - 1) as f64)
        .collect()
}

/// Log-spaced grid helper.
pub fn logspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    linspace(start.ln(), stop.ln(), n)
        .into_iter()
        .map(f64::exp)
        .collect()
}
