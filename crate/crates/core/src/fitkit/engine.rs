//! Deterministic trust-region least squares (Levenberg–Marquardt with
//! adaptive damping) over numerically differentiated models.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One fitted parameter with its 1σ uncertainty.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FittedParam {
    pub name: String,
    pub value: f64,
    pub sigma: f64,
}

/// Outcome of a least-squares minimisation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub params: Vec<FittedParam>,
    /// Residual sum of squares at the optimum (weighted when σ supplied).
    pub rss: f64,
    /// 1 − RSS/TSS on the fitted data window.
    pub r_squared: f64,
    /// Parameter covariance, scaled by the reduced chi-square.
    pub covariance: Vec<Vec<f64>>,
    pub iterations: usize,
    pub converged: bool,
    /// Diagnostics: bound activity, degeneracy flags, multi-start summary.
    pub message: String,
    /// RNG seed used when multi-start was active.
    pub seed: Option<u64>,
}

impl FitResult {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.value)
    }

    pub fn sigma(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|p| p.name == name).map(|p| p.sigma)
    }

    /// Contract checks: r² ≤ 1, symmetric PSD covariance, σ ≥ 0.
    pub fn validate(&self) -> Result<()> {
        if self.r_squared > 1.0 + 1e-12 {
            return Err(Error::InvalidInput(format!(
                "r² = {} exceeds 1",
                self.r_squared
            )));
        }
        if self.params.iter().any(|p| p.sigma < 0.0) {
            return Err(Error::InvalidInput("negative parameter uncertainty".into()));
        }
        let n = self.covariance.len();
        for i in 0..n {
            for j in 0..n {
                let a = self.covariance[i][j];
                let b = self.covariance[j][i];
                if (a - b).abs() > 1e-9 * a.abs().max(b.abs()).max(1e-300) {
                    return Err(Error::InvalidInput("covariance not symmetric".into()));
                }
            }
        }
        Ok(())
    }
}

/// Seeded multi-start configuration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MultiStart {
    pub starts: usize,
    pub seed: u64,
    /// Relative perturbation scale applied to the initial guess.
    pub spread: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LeastSquaresOptions {
    pub max_iterations: usize,
    /// Relative RSS improvement below which the fit is converged.
    pub cost_tolerance: f64,
    /// Relative step norm below which the fit is converged.
    pub step_tolerance: f64,
    pub initial_lambda: f64,
    /// Relative central-difference step for the numeric Jacobian.
    pub jacobian_step: f64,
    pub multi_start: Option<MultiStart>,
}

impl Default for LeastSquaresOptions {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            cost_tolerance: 1e-12,
            step_tolerance: 1e-12,
            initial_lambda: 1e-3,
            jacobian_step: 1e-6,
            multi_start: None,
        }
    }
}

/// A least-squares problem: a model mapping parameters to predictions over a
/// fixed set of observations, optional per-point σ, and box bounds.
pub struct Problem<'a> {
    pub model: &'a dyn Fn(&[f64], &mut [f64]),
    pub observations: &'a [f64],
    pub sigma: Option<&'a [f64]>,
    pub names: Vec<String>,
    /// Inclusive box bounds per parameter; use ±INFINITY for unbounded.
    pub bounds: Vec<(f64, f64)>,
}

impl<'a> Problem<'a> {
    fn residuals(&self, params: &[f64], pred: &mut [f64], out: &mut DVector<f64>) {
        (self.model)(params, pred);
        for (k, (&p, &y)) in pred.iter().zip(self.observations.iter()).enumerate() {
            let w = self.sigma.map_or(1.0, |s| 1.0 / s[k]);
            out[k] = (p - y) * w;
        }
    }
}

/// Local minimiser of Σ residuals². Deterministic for fixed inputs and seed;
/// covariance is taken from the Jacobian at the optimum.
pub fn least_squares(
    problem: &Problem<'_>,
    initial: &[f64],
    opts: &LeastSquaresOptions,
) -> Result<FitResult> {
    let n = initial.len();
    if problem.bounds.len() != n || problem.names.len() != n {
        return Err(Error::InvalidInput(
            "parameter names, bounds and initial guess must have equal length".into(),
        ));
    }
    for (k, &p) in initial.iter().enumerate() {
        let (lo, hi) = problem.bounds[k];
        if !(p >= lo && p <= hi) {
            return Err(Error::BoundViolation {
                name: problem.names[k].clone(),
                value: p,
                lower: lo,
                upper: hi,
            });
        }
    }
    if let Some(s) = problem.sigma {
        if s.len() != problem.observations.len() || s.iter().any(|v| *v <= 0.0) {
            return Err(Error::InvalidInput(
                "per-point σ must be positive and match the data".into(),
            ));
        }
    }

    match opts.multi_start {
        None => minimize_from(problem, initial, opts, None),
        Some(ms) => {
            let mut rng = ChaCha8Rng::seed_from_u64(ms.seed);
            let mut best: Option<FitResult> = None;
            for start in 0..ms.starts.max(1) {
                let guess: Vec<f64> = if start == 0 {
                    initial.to_vec()
                } else {
                    initial
                        .iter()
                        .enumerate()
                        .map(|(k, &p)| {
                            let u: f64 = rng.gen_range(-1.0..1.0);
                            let perturbed = if p != 0.0 {
                                p * (ms.spread * u).exp()
                            } else {
                                ms.spread * u
                            };
                            let (lo, hi) = problem.bounds[k];
                            perturbed.clamp(lo, hi)
                        })
                        .collect()
                };
                let candidate = minimize_from(problem, &guess, opts, Some(ms.seed));
                match candidate {
                    Ok(c) => {
                        let better = best.as_ref().is_none_or(|b| c.rss < b.rss);
                        if better {
                            best = Some(c);
                        }
                    }
                    Err(_) if best.is_some() || start + 1 < ms.starts => continue,
                    Err(e) => return Err(e),
                }
            }
            best.ok_or_else(|| Error::FitDiverged("all multi-start attempts failed".into()))
        }
    }
}

fn minimize_from(
    problem: &Problem<'_>,
    initial: &[f64],
    opts: &LeastSquaresOptions,
    seed: Option<u64>,
) -> Result<FitResult> {
    let m = problem.observations.len();
    let n = initial.len();
    if m < n {
        return Err(Error::InvalidInput(format!(
            "need at least as many observations ({m}) as parameters ({n})"
        )));
    }

    let mut params = initial.to_vec();
    let mut pred = vec![0.0; m];
    let mut resid = DVector::zeros(m);
    problem.residuals(&params, &mut pred, &mut resid);
    let mut cost = resid.norm_squared();
    if !cost.is_finite() {
        return Err(Error::FitDiverged(
            "non-finite residuals at the initial guess".into(),
        ));
    }

    let mut lambda = opts.initial_lambda;
    let mut iterations = 0;
    let mut converged = false;
    let mut message = String::new();

    while iterations < opts.max_iterations {
        iterations += 1;
        let jac = numeric_jacobian(problem, &params, &mut pred, opts.jacobian_step);
        let jtj = jac.transpose() * &jac;
        let jtr = jac.transpose() * &resid;

        if (0..n).all(|k| jtj[(k, k)] == 0.0) {
            return Err(Error::SingularJacobian);
        }

        let mut accepted = false;
        for _ in 0..40 {
            let mut damped = jtj.clone();
            for k in 0..n {
                let d = jtj[(k, k)];
                damped[(k, k)] = d + lambda * d.max(1e-30);
            }
            let Some(step) = damped.clone().lu().solve(&(-&jtr)) else {
                lambda *= 4.0;
                continue;
            };
            if !step.iter().all(|v| v.is_finite()) {
                lambda *= 4.0;
                continue;
            }
            let mut trial: Vec<f64> = params
                .iter()
                .zip(step.iter())
                .map(|(&p, &d)| p + d)
                .collect();
            for (k, t) in trial.iter_mut().enumerate() {
                let (lo, hi) = problem.bounds[k];
                *t = t.clamp(lo, hi);
            }
            let mut trial_resid = DVector::zeros(m);
            problem.residuals(&trial, &mut pred, &mut trial_resid);
            let trial_cost = trial_resid.norm_squared();
            if trial_cost.is_finite() && trial_cost < cost {
                let rel_drop = (cost - trial_cost) / cost.max(1e-300);
                let rel_step =
                    step.norm() / params.iter().map(|p| p * p).sum::<f64>().sqrt().max(1e-300);
                params = trial;
                resid = trial_resid;
                cost = trial_cost;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if rel_drop < opts.cost_tolerance || rel_step < opts.step_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e14 {
                break;
            }
        }
        if !accepted {
            // No downhill step at any damping: already at a (possibly
            // bound-constrained) minimum.
            converged = true;
        }
        if converged {
            break;
        }
    }
    if !converged {
        message.push_str("iteration limit reached; ");
    }

    // Covariance from the Jacobian at the optimum.
    let jac = numeric_jacobian(problem, &params, &mut pred, opts.jacobian_step);
    let jtj = jac.transpose() * &jac;
    let dof = (m - n).max(1) as f64;
    let scale = cost / dof;
    let covariance = match jtj.clone().try_inverse() {
        Some(inv) => {
            let mut c = inv * scale;
            // Symmetrise against roundoff.
            let ct = c.transpose();
            c = (c + ct) * 0.5;
            c
        }
        None => {
            message.push_str("singular Jacobian at optimum: covariance unavailable; ");
            DMatrix::from_element(n, n, f64::NAN)
        }
    };

    for (k, &p) in params.iter().enumerate() {
        let (lo, hi) = problem.bounds[k];
        if p == lo || p == hi {
            message.push_str(&format!("parameter {} at bound; ", problem.names[k]));
        }
    }

    // r² on the (weighted) data window.
    let mean = problem.observations.iter().sum::<f64>() / m as f64;
    let tss: f64 = problem
        .observations
        .iter()
        .enumerate()
        .map(|(k, &y)| {
            let w = problem.sigma.map_or(1.0, |s| 1.0 / s[k]);
            ((y - mean) * w).powi(2)
        })
        .sum();
    let r_squared = if tss > 0.0 {
        1.0 - cost / tss
    } else {
        f64::NAN
    };

    let params_out = params
        .iter()
        .enumerate()
        .map(|(k, &v)| FittedParam {
            name: problem.names[k].clone(),
            value: v,
            sigma: covariance[(k, k)].max(0.0).sqrt(),
        })
        .collect();

    let result = FitResult {
        params: params_out,
        rss: cost,
        r_squared,
        covariance: (0..n)
            .map(|i| (0..n).map(|j| covariance[(i, j)]).collect())
            .collect(),
        iterations,
        converged,
        message,
        seed,
    };
    result.validate()?;
    Ok(result)
}

/// Central-difference Jacobian of the weighted residual vector.
fn numeric_jacobian(
    problem: &Problem<'_>,
    params: &[f64],
    pred: &mut [f64],
    rel_step: f64,
) -> DMatrix<f64> {
    let m = problem.observations.len();
    let n = params.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut plus = DVector::zeros(m);
    let mut minus = DVector::zeros(m);
    let mut work = params.to_vec();
    for j in 0..n {
        let h = rel_step * params[j].abs().max(rel_step);
        work[j] = params[j] + h;
        problem.residuals(&work, pred, &mut plus);
        work[j] = params[j] - h;
        problem.residuals(&work, pred, &mut minus);
        work[j] = params[j];
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / (2.0 * h);
        }
    }
    jac
}
