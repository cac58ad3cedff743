//! Perturbed-objective solving and worst-case DP calibration.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::glm::{objective_grad, objective_hessian, objective_value, Dataset, GlmLoss, ObjectiveSpec};
use crate::stat::normal_cdf;

const MAX_NEWTON_ITER: usize = 200;
const ARMIJO_C: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;

/// Output of the perturbed minimization, carrying the noise vector that
/// produced it. The stationarity identity `grad J(theta_hat; D) = -b` holds to
/// `grad_residual` in the max norm.
#[derive(Debug, Clone)]
pub struct PerturbedModel {
    pub theta_hat: DVector<f64>,
    pub b: DVector<f64>,
    pub sigma: f64,
    pub lambda: f64,
    pub grad_residual: f64,
    pub iterations: usize,
}

/// A worst-case differential-privacy target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DpTarget {
    pub epsilon: f64,
    pub delta: f64,
}

impl DpTarget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 || !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need epsilon > 0 and delta in (0,1), got ({epsilon}, {delta})"
            )));
        }
        Ok(Self { epsilon, delta })
    }
}

/// `d` independent draws from N(0, sigma^2); deterministic given the RNG state.
pub fn sample_noise<R: Rng + ?Sized>(d: usize, sigma: f64, rng: &mut R) -> DVector<f64> {
    assert!(sigma >= 0.0, "noise scale must be nonnegative");
    DVector::from_fn(d, |_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}

fn solve_tolerance(n: usize) -> f64 {
    1e-9 * (n.max(1) as f64)
}

/// Minimizes `J(theta; D) + b' theta` by damped Newton from `theta = 0`.
pub fn solve(spec: &ObjectiveSpec, data: &Dataset, b: &DVector<f64>, sigma: f64) -> Result<PerturbedModel> {
    solve_from(spec, data, b, sigma, DVector::zeros(data.d()))
}

/// Same as [`solve`] but with an explicit starting point.
pub fn solve_from(
    spec: &ObjectiveSpec,
    data: &Dataset,
    b: &DVector<f64>,
    sigma: f64,
    mut theta: DVector<f64>,
) -> Result<PerturbedModel> {
    let tol = solve_tolerance(data.n());
    let mut value = objective_value(spec, data, &theta, b)?;
    let mut grad = objective_grad(spec, data, &theta, b)?;
    let mut residual = grad.amax();

    let mut iterations = 0;
    while residual > tol {
        if iterations >= MAX_NEWTON_ITER {
            return Err(Error::NonConvergence {
                max_iter: MAX_NEWTON_ITER,
                residual,
            });
        }
        let hess = objective_hessian(spec, data, &theta)?;
        let chol = hess.cholesky().ok_or(Error::NotPositiveDefinite)?;
        let step = -chol.solve(&grad);

        if residual <= 1e-6 * (data.n().max(1) as f64) {
            // Quadratic-convergence basin: objective decrements are below
            // float resolution here, so a backtracking test would stall.
            theta += &step;
            value = objective_value(spec, data, &theta, b)?;
        } else {
            // Armijo backtracking along the Newton direction.
            let slope = grad.dot(&step);
            let mut t = 1.0;
            loop {
                let candidate = &theta + t * &step;
                let cand_value = objective_value(spec, data, &candidate, b)?;
                if cand_value <= value + ARMIJO_C * t * slope {
                    theta = candidate;
                    value = cand_value;
                    break;
                }
                t *= ARMIJO_SHRINK;
                if t < 1e-20 {
                    return Err(Error::NonConvergence {
                        max_iter: MAX_NEWTON_ITER,
                        residual,
                    });
                }
            }
        }

        grad = objective_grad(spec, data, &theta, b)?;
        residual = grad.amax();
        iterations += 1;
    }

    Ok(PerturbedModel {
        theta_hat: theta,
        b: b.clone(),
        sigma,
        lambda: spec.lambda,
        grad_residual: residual,
        iterations,
    })
}

/// Calibration output for the objective-perturbation mechanism. The published
/// noise requirement reads as a variance, so both forms are recorded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjPertCalibration {
    /// Noise standard deviation to feed `sample_noise`.
    pub sigma: f64,
    /// The variance `xi^2 (8 log(2/delta) + 4 eps) / eps^2`.
    pub sigma_squared: f64,
    /// Minimum ridge coefficient `2 beta / eps`.
    pub lambda_min_required: f64,
}

/// Noise and regularization required for `(eps, delta)`-DP.
///
/// Rejects losses with unbounded gradient norm (squared loss over an
/// unconstrained domain cannot satisfy worst-case DP for any finite epsilon).
pub fn calibrate_objpert(loss: GlmLoss, target: DpTarget) -> Result<ObjPertCalibration> {
    let xi = loss.xi().ok_or(Error::UnboundedGradient)?;
    let eps = target.epsilon;
    let sigma_squared = xi * xi * (8.0 * (2.0 / target.delta).ln() + 4.0 * eps) / (eps * eps);
    Ok(ObjPertCalibration {
        sigma: sigma_squared.sqrt(),
        sigma_squared,
        lambda_min_required: 2.0 * loss.beta() / eps,
    })
}

/// Gaussian-mechanism failure mass at noise scale `sigma` for sensitivity
/// `delta_sens` and privacy parameter `eps`.
fn analytic_gaussian_profile(delta_sens: f64, eps: f64, sigma: f64) -> f64 {
    let a = delta_sens / (2.0 * sigma);
    let b = eps * sigma / delta_sens;
    normal_cdf(a - b) - eps.exp() * normal_cdf(-a - b)
}

/// Minimal noise scale for which the Gaussian mechanism with the given
/// sensitivity satisfies the `(eps, delta)` target, found by bisection on the
/// exact failure-mass expression.
pub fn calibrate_gaussian_analytic(sensitivity: f64, target: DpTarget) -> Result<f64> {
    if !sensitivity.is_finite() || sensitivity <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "sensitivity must be positive, got {sensitivity}"
        )));
    }
    let eps = target.epsilon;
    let delta = target.delta;

    let mut hi = sensitivity;
    while analytic_gaussian_profile(sensitivity, eps, hi) > delta {
        hi *= 2.0;
        if hi > sensitivity * 1e12 {
            return Err(Error::InvalidParameter(
                "analytic Gaussian calibration failed to bracket".into(),
            ));
        }
    }
    let mut lo = hi / 2.0;
    while analytic_gaussian_profile(sensitivity, eps, lo) <= delta {
        lo /= 2.0;
        if lo < sensitivity * 1e-12 {
            // Already feasible at negligible noise.
            return Ok(lo);
        }
    }

    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        let profile = analytic_gaussian_profile(sensitivity, eps, mid);
        debug_assert!(
            analytic_gaussian_profile(sensitivity, eps, lo) >= profile
                && profile >= analytic_gaussian_profile(sensitivity, eps, hi) - 1e-15,
            "failure mass must be nonincreasing in sigma"
        );
        if profile <= delta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// On-disk model format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelRecord {
    pub theta_hat: Vec<f64>,
    pub b: Vec<f64>,
    pub sigma: f64,
    pub lambda: f64,
    pub loss_kind: GlmLoss,
    pub seed: u64,
    pub grad_residual: f64,
}

impl ModelRecord {
    pub fn from_model(model: &PerturbedModel, loss_kind: GlmLoss, seed: u64) -> Self {
        Self {
            theta_hat: model.theta_hat.iter().cloned().collect(),
            b: model.b.iter().cloned().collect(),
            sigma: model.sigma,
            lambda: model.lambda,
            loss_kind,
            seed,
            grad_residual: model.grad_residual,
        }
    }

    pub fn to_model(&self) -> PerturbedModel {
        PerturbedModel {
            theta_hat: DVector::from_vec(self.theta_hat.clone()),
            b: DVector::from_vec(self.b.clone()),
            sigma: self.sigma,
            lambda: self.lambda,
            grad_residual: self.grad_residual,
            iterations: 0,
        }
    }

    pub fn spec(&self) -> Result<ObjectiveSpec> {
        ObjectiveSpec::new(self.loss_kind, self.lambda)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(file)?)
    }
}
