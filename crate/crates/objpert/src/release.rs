//! Noisy releases of data-dependent quantities and their privacy accounting.
//!
//! The Hessian is released by adding a Gaussian-orthogonal-ensemble matrix:
//! compared with adding i.i.d. noise to the upper triangle, the GOE carries
//! half the variance off the diagonal at the same privacy level, and its
//! largest-eigenvalue distribution is known exactly, which is what the
//! confidence parameter `tau` is read from.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::accounting::gaussian_pdp_tailbound;
use crate::error::{Error, Result};
use crate::solver::PerturbedModel;
use crate::stat::two_sided_pad;

/// A symmetric noise matrix distributed as `(Z + Z')/sqrt(2)` with `Z` i.i.d.
/// `N(0, sigma^2)`: off-diagonal variance `sigma^2`, diagonal `2 sigma^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct GoeMatrix {
    pub d: usize,
    pub sigma: f64,
    pub entries: DMatrix<f64>,
}

/// Draws a GOE matrix; symmetry is exact because only the upper triangle is
/// sampled.
pub fn sample_goe<R: Rng + ?Sized>(d: usize, sigma: f64, rng: &mut R) -> GoeMatrix {
    assert!(sigma >= 0.0, "noise scale must be nonnegative");
    let mut entries = DMatrix::zeros(d, d);
    let diag_scale = std::f64::consts::SQRT_2 * sigma;
    for i in 0..d {
        entries[(i, i)] = diag_scale * rng.sample::<f64, _>(StandardNormal);
        for j in (i + 1)..d {
            let v = sigma * rng.sample::<f64, _>(StandardNormal);
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    GoeMatrix { d, sigma, entries }
}

/// Spectral norm of a symmetric matrix.
pub fn sym_spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues()
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// A resolved quantile of the largest GOE eigenvalue, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauEstimate {
    pub value: f64,
    pub method: String,
}

/// How to obtain the `(1 - rho/2)` quantile of the largest eigenvalue of the
/// standard GOE (unit diagonal variance, half off the diagonal) in dimension d.
#[derive(Debug, Clone, PartialEq)]
pub enum TauMethod {
    /// Empirical quantile over `samples` draws, padded to an order-statistic
    /// 99% upper confidence bound.
    MonteCarlo { samples: usize, seed: u64 },
    /// `sqrt(2) (2 + (log(C/rho)/(c d))^(2/3)) sqrt(d)` with C = c = 1.
    /// A shape from random-matrix tail bounds whose constants are not pinned
    /// down; treat as heuristic, not a certified bound.
    Asymptotic,
    /// A externally supplied value, e.g. from published exact-CDF tables.
    External(f64),
}

pub const DEFAULT_MC_SAMPLES: usize = 200_000;

/// Largest eigenvalue of one standard-GOE draw. The standard normalization
/// (diagonal variance 1) is the one used by the published exact CDF; it is our
/// per-entry sampler at scale `1/sqrt(2)`.
fn standard_goe_lambda_max(d: usize, rng: &mut ChaCha20Rng) -> f64 {
    let goe = sample_goe(d, std::f64::consts::FRAC_1_SQRT_2, rng);
    goe.entries
        .symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

fn monte_carlo_tau(d: usize, rho: f64, samples: usize, seed: u64) -> Result<TauEstimate> {
    if rho / 2.0 < 10.0 / samples as f64 {
        return Err(Error::MonteCarloTailTooDeep { rho, samples });
    }
    const SHARD: usize = 256;
    let shards = samples.div_ceil(SHARD);
    let mut values: Vec<f64> = (0..shards)
        .into_par_iter()
        .flat_map_iter(|shard| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(shard as u64));
            let count = SHARD.min(samples - shard * SHARD);
            (0..count)
                .map(|_| standard_goe_lambda_max(d, &mut rng))
                .collect::<Vec<_>>()
        })
        .collect();
    values.sort_by(f64::total_cmp);

    let q = 1.0 - rho / 2.0;
    let n = values.len() as f64;
    // order-statistic 99% upper confidence bound on the true quantile
    let rank = (n * q + 2.326_347_874 * (n * q * (1.0 - q)).sqrt()).ceil() as usize;
    let index = rank.clamp(1, values.len()) - 1;
    Ok(TauEstimate {
        value: values[index],
        method: format!("monte_carlo(n={samples}, seed={seed}, 99% order-statistic pad)"),
    })
}

/// The `(1 - rho/2)` quantile of the largest standard-GOE eigenvalue.
pub fn goe_quantile(d: usize, rho: f64, method: &TauMethod) -> Result<TauEstimate> {
    if !(0.0 < rho && rho < 1.0) {
        return Err(Error::InvalidParameter(format!("rho must be in (0,1), got {rho}")));
    }
    match method {
        TauMethod::MonteCarlo { samples, seed } => monte_carlo_tau(d, rho, *samples, *seed),
        TauMethod::Asymptotic => {
            let t = (1.0 / rho).ln() / d as f64;
            let value = std::f64::consts::SQRT_2 * (2.0 + t.powf(2.0 / 3.0)) * (d as f64).sqrt();
            Ok(TauEstimate {
                value,
                method: "asymptotic (heuristic, not a certified bound; C=1, c=1)".to_string(),
            })
        }
        TauMethod::External(tau) => Ok(TauEstimate {
            value: *tau,
            method: "external".to_string(),
        }),
    }
}

/// One row of the on-disk quantile table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauTableEntry {
    pub d: usize,
    pub rho: f64,
    pub tau: f64,
    pub method: String,
    pub provenance: String,
}

/// External quantile table, shipped with the published exact-CDF value for
/// dimension 50.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauTable {
    pub entries: Vec<TauTableEntry>,
}

impl TauTable {
    pub fn builtin() -> Self {
        Self {
            entries: vec![TauTableEntry {
                d: 50,
                rho: 8.465e-6,
                tau: 12.0,
                method: "exact-cdf".to_string(),
                provenance: "published GOE largest-eigenvalue CDF table".to_string(),
            }],
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(file)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, self)?;
        Ok(())
    }

    /// Exact-match lookup on dimension with the closest stored tail.
    pub fn lookup(&self, d: usize, rho: f64) -> Option<&TauTableEntry> {
        self.entries
            .iter()
            .filter(|e| e.d == d)
            .min_by(|a, b| {
                (a.rho - rho)
                    .abs()
                    .total_cmp(&(b.rho - rho).abs())
            })
    }
}

/// The GOE-noised objective Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct ReleasedHessian {
    pub h_hat: DMatrix<f64>,
    pub sigma3: f64,
    pub tau: TauEstimate,
    pub rho: f64,
}

/// `H + GOE(sigma3)`.
pub fn release_hessian<R: Rng + ?Sized>(
    h: &DMatrix<f64>,
    sigma3: f64,
    rho: f64,
    tau: TauEstimate,
    rng: &mut R,
) -> ReleasedHessian {
    let noise = sample_goe(h.nrows(), sigma3, rng);
    ReleasedHessian {
        h_hat: h + noise.entries,
        sigma3,
        tau,
        rho,
    }
}

/// Per-instance pDP of the GOE Hessian release. The vectorized sensitivity of
/// the release is `||H_x||_F / sqrt(2)` (for GLMs, `||H_x||_F = f'' ||x||^2`).
pub fn pdp_of_hessian_release(h_x_frobenius: f64, sigma3: f64, delta: f64) -> Result<f64> {
    gaussian_pdp_tailbound(h_x_frobenius / std::f64::consts::SQRT_2, sigma3, delta)
}

/// The noised smallest eigenvalue with its one-sided confidence floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReleasedLambdaMin {
    pub value: f64,
    pub sigma4: f64,
    /// `max(lambda, value - sigma4 * z_{1 - rho/2})`.
    pub lower_conf: f64,
}

/// Scalar Gaussian mechanism on `lambda_min(H)`, floored at the public ridge
/// coefficient.
pub fn release_lambda_min<R: Rng + ?Sized>(
    h: &DMatrix<f64>,
    sigma4: f64,
    rho: f64,
    lambda: f64,
    rng: &mut R,
) -> ReleasedLambdaMin {
    let lambda_min = sym_min_eigenvalue(h);
    let value = lambda_min + sigma4 * rng.sample::<f64, _>(StandardNormal);
    let lower_conf = (value - sigma4 * two_sided_pad(rho)).max(lambda);
    ReleasedLambdaMin {
        value,
        sigma4,
        lower_conf,
    }
}

/// Per-instance pDP of the smallest-eigenvalue release; the sensitivity is the
/// spectral norm `f'' ||x||^2` of the rank-one per-point Hessian.
pub fn pdp_of_lambda_min(f2norm: f64, sigma4: f64, delta: f64) -> Result<f64> {
    gaussian_pdp_tailbound(f2norm, sigma4, delta)
}

/// The noised objective gradient at the released minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct ReleasedGradient {
    pub j_p: DVector<f64>,
    pub sigma2: f64,
}

impl ReleasedGradient {
    /// Inner-product evaluator `g^P(z) = (J^P)' grad l(theta_hat; z)`.
    pub fn evaluate(&self, point_grad: &DVector<f64>) -> f64 {
        self.j_p.dot(point_grad)
    }
}

/// Releases `J^P = grad J(theta_hat; D) + e` with `e ~ N(0, sigma2^2 I)`,
/// using the stationarity identity `grad J(theta_hat; D) = -b` exactly.
pub fn release_gradient<R: Rng + ?Sized>(
    model: &PerturbedModel,
    sigma2: f64,
    rng: &mut R,
) -> ReleasedGradient {
    let noise = crate::solver::sample_noise(model.b.len(), sigma2, rng);
    ReleasedGradient {
        j_p: -&model.b + noise,
        sigma2,
    }
}

/// Which tail the gradient-release pDP is evaluated against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GpPdpMode {
    /// `(eps, delta)`-pDP form: `sqrt(2 log(1/delta))`.
    Pdp,
    /// High-probability ex-post form: `sqrt(2 log(2/rho))`.
    ExPost,
}

/// pDP of the gradient release for a target with loss-gradient norm `gradnorm`.
pub fn gp_pdp(gradnorm: f64, sigma2: f64, delta_or_rho: f64, mode: GpPdpMode) -> Result<f64> {
    match mode {
        GpPdpMode::Pdp => gaussian_pdp_tailbound(gradnorm, sigma2, delta_or_rho),
        GpPdpMode::ExPost => {
            if sigma2 == 0.0 {
                return if gradnorm == 0.0 {
                    Ok(0.0)
                } else {
                    Err(Error::InfinitePrivacyLoss)
                };
            }
            Ok(gradnorm * gradnorm / (2.0 * sigma2 * sigma2)
                + gradnorm * (2.0 * (2.0 / delta_or_rho).ln()).sqrt() / sigma2)
        }
    }
}
