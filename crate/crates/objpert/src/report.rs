//! The publishable privacy report.
//!
//! A report is everything an individual needs to bound her own ex-post privacy
//! loss: the released minimizer, public mechanism parameters, and (in the
//! data-dependent modes) noisy releases of the Hessian, the objective gradient
//! and optionally the smallest Hessian eigenvalue. Evaluation reads nothing
//! else; the raw dataset is dropped at build time.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::glm::{objective_hessian, DataPoint, Dataset, GlmLoss, ObjectiveSpec};
use crate::release::{
    gp_pdp, goe_quantile, pdp_of_hessian_release, pdp_of_lambda_min, release_gradient,
    release_hessian, release_lambda_min, GpPdpMode, ReleasedGradient, ReleasedHessian,
    ReleasedLambdaMin, TauEstimate, TauMethod,
};
use crate::solver::{DpTarget, PerturbedModel};
use crate::stat::two_sided_pad;

/// Report flavor: bounds from public parameters only, from noisy releases, or
/// from noisy releases plus an eigenvalue-adaptive estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportMode {
    DataIndep,
    DataDep,
    Adaptive,
}

/// Which leverage-score estimator the report evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MuBarSpec {
    /// `||x||^2 / lambda`.
    DataIndep,
    /// `(3/2) x' (H_hat)^{-1} x`.
    Standard,
    /// `min{(l + tau s3)/l x' (H_hat)^{-1} x, ||x||^2 / l}` with `l` the
    /// lower-confidence floor of the released smallest eigenvalue.
    AdaptiveStandard,
    /// `min{(l + 2 tau s3)/l x' (H_hat + tau s3 I)^{-1} x, ||x||^2 / l}`.
    AdaptiveRegularized,
}

/// Confidence pad applied to the cross term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CrossPad {
    /// Per-query two-sided pad `z_{1 - rho/2}`.
    TwoSided,
    /// Union bound over the `n` dataset members: `sqrt(2 log(n/rho))`.
    UnionDataset { n: usize },
    /// Union bound over the whole domain via the l1 route:
    /// `sigma |f'| ||x||_1 sqrt(2 log(2d/rho))`.
    UnionDomain,
}

impl CrossPad {
    fn is_default(&self) -> bool {
        matches!(self, CrossPad::TwoSided)
    }

    /// Multiplier applied to `sigma-scale * |f'| * ||x||`; `UnionDomain` is
    /// handled separately because it switches norms.
    pub fn factor(&self, rho: f64) -> f64 {
        match self {
            CrossPad::TwoSided => two_sided_pad(rho),
            CrossPad::UnionDataset { n } => (2.0 * (*n as f64 / rho).ln()).sqrt(),
            CrossPad::UnionDomain => unreachable!("l1 pad does not use the l2 factor"),
        }
    }
}

/// Per-release noise scales.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReleaseNoise {
    pub sigma2: f64,
    pub sigma3: f64,
    pub sigma4: f64,
}

/// The publishable report. Everything evaluation touches lives here.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyReport {
    pub mode: ReportMode,
    pub theta_hat: DVector<f64>,
    pub sigma: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub sigma4: f64,
    pub lambda: f64,
    pub rho: f64,
    pub tau: TauEstimate,
    pub loss_kind: GlmLoss,
    pub hessian: Option<ReleasedHessian>,
    pub gradient: Option<ReleasedGradient>,
    pub lambda_min: Option<ReleasedLambdaMin>,
    pub mu_bar_spec: MuBarSpec,
    pub pad: CrossPad,
}

/// The component losses reported to an individual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportEvaluation {
    pub eps1_bar: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub eps4: f64,
    pub term1: f64,
    pub term2: f64,
    pub term3: f64,
}

/// Builds a report for the solved model. `data` is read here and only here.
///
/// Data-dependent mode enforces the regularization requirement
/// `lambda >= 2 sigma3 tau`; the adaptive mode instead releases the smallest
/// eigenvalue and picks its estimator by the branch
/// `lower_conf >= 2 tau sigma3`.
#[allow(clippy::too_many_arguments)]
pub fn build_report<R: Rng + ?Sized>(
    model: &PerturbedModel,
    spec: &ObjectiveSpec,
    data: &Dataset,
    mode: ReportMode,
    noise: ReleaseNoise,
    rho: f64,
    tau_method: &TauMethod,
    rng: &mut R,
) -> Result<PrivacyReport> {
    if !(0.0 < rho && rho < 1.0) {
        return Err(Error::InvalidParameter(format!("rho must be in (0,1), got {rho}")));
    }
    let mut report = PrivacyReport {
        mode,
        theta_hat: model.theta_hat.clone(),
        sigma: model.sigma,
        sigma2: noise.sigma2,
        sigma3: noise.sigma3,
        sigma4: noise.sigma4,
        lambda: spec.lambda,
        rho,
        tau: TauEstimate {
            value: 0.0,
            method: "unused".to_string(),
        },
        loss_kind: spec.loss,
        hessian: None,
        gradient: None,
        lambda_min: None,
        mu_bar_spec: MuBarSpec::DataIndep,
        pad: CrossPad::TwoSided,
    };

    if mode == ReportMode::DataIndep {
        return Ok(report);
    }

    let d = data.d();
    let tau = goe_quantile(d, rho, tau_method)?;
    if mode == ReportMode::DataDep {
        let required = 2.0 * noise.sigma3 * tau.value;
        if spec.lambda < required {
            return Err(Error::LambdaTooSmall {
                lambda: spec.lambda,
                required,
            });
        }
    }

    let hessian = objective_hessian(spec, data, &model.theta_hat)?;
    report.gradient = Some(release_gradient(model, noise.sigma2, rng));
    report.hessian = Some(release_hessian(
        &hessian,
        noise.sigma3,
        rho,
        tau.clone(),
        rng,
    ));
    report.tau = tau;

    match mode {
        ReportMode::DataIndep => unreachable!(),
        ReportMode::DataDep => {
            report.mu_bar_spec = MuBarSpec::Standard;
        }
        ReportMode::Adaptive => {
            let released =
                release_lambda_min(&hessian, noise.sigma4, rho, spec.lambda, rng);
            report.mu_bar_spec = if released.lower_conf >= 2.0 * report.tau.value * noise.sigma3 {
                MuBarSpec::AdaptiveStandard
            } else {
                MuBarSpec::AdaptiveRegularized
            };
            report.lambda_min = Some(released);
        }
    }
    Ok(report)
}

fn quad_form(m: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(x.dot(&chol.solve(x)))
}

impl PrivacyReport {
    fn released_hessian(&self) -> Result<&ReleasedHessian> {
        self.hessian
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("report carries no released Hessian".into()))
    }

    fn lambda_min_floor(&self) -> Result<f64> {
        Ok(self
            .lambda_min
            .as_ref()
            .ok_or_else(|| {
                Error::InvalidParameter("report carries no released smallest eigenvalue".into())
            })?
            .lower_conf)
    }

    /// The active leverage-score upper estimator at `x`.
    pub fn mu_bar(&self, x: &DVector<f64>) -> Result<f64> {
        match self.mu_bar_spec {
            MuBarSpec::DataIndep => Ok(x.norm_squared() / self.lambda),
            MuBarSpec::Standard => {
                let h = &self.released_hessian()?.h_hat;
                Ok(1.5 * quad_form(h, x)?)
            }
            MuBarSpec::AdaptiveStandard => {
                let lower = self.lambda_min_floor()?;
                let h = &self.released_hessian()?.h_hat;
                let scale = (lower + self.tau.value * self.sigma3) / lower;
                Ok((scale * quad_form(h, x)?).min(x.norm_squared() / lower))
            }
            MuBarSpec::AdaptiveRegularized => {
                let lower = self.lambda_min_floor()?;
                let ts = self.tau.value * self.sigma3;
                let d = self.theta_hat.len();
                let regularized =
                    &self.released_hessian()?.h_hat + DMatrix::from_diagonal_element(d, d, ts);
                let scale = (lower + 2.0 * ts) / lower;
                Ok((scale * quad_form(&regularized, x)?).min(x.norm_squared() / lower))
            }
        }
    }

    /// The cross-term upper estimator at `z` (always nonnegative).
    pub fn g_bar(&self, z: &DataPoint) -> Result<f64> {
        let f1 = self.loss_kind.d1(z.x.dot(&self.theta_hat), z.y);
        let grad_norm = f1.abs() * z.x.norm();

        let data_indep = match self.pad {
            CrossPad::UnionDomain => {
                let d = z.dim() as f64;
                let l1 = f1.abs() * z.x.iter().map(|v| v.abs()).sum::<f64>();
                self.sigma * l1 * (2.0 * (2.0 * d / self.rho).ln()).sqrt()
            }
            pad => self.sigma * grad_norm * pad.factor(self.rho),
        };

        if self.mode == ReportMode::DataIndep || matches!(self.pad, CrossPad::UnionDomain) {
            return Ok(data_indep);
        }

        let gradient = self
            .gradient
            .as_ref()
            .ok_or_else(|| Error::InvalidParameter("report carries no released gradient".into()))?;
        let point_grad = f1 * &z.x;
        let estimate = gradient.evaluate(&point_grad).abs()
            + self.sigma2 * grad_norm * self.pad.factor(self.rho);
        Ok(estimate.min(data_indep))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let record = ReportRecord::from_report(self);
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(file, &record)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let record: ReportRecord = serde_json::from_reader(file)?;
        record.into_report()
    }
}

/// Evaluates the report at `z` with the release-overhead losses taken at tail
/// mass `delta = rho` (the equal-budget default).
pub fn evaluate_report(report: &PrivacyReport, z: &DataPoint) -> Result<ReportEvaluation> {
    evaluate_report_at(report, z, report.rho)
}

/// Evaluates the report at `z`, with an explicit tail mass for the overhead
/// losses `eps2..eps4`.
pub fn evaluate_report_at(
    report: &PrivacyReport,
    z: &DataPoint,
    delta: f64,
) -> Result<ReportEvaluation> {
    if z.dim() != report.theta_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: report.theta_hat.len(),
            got: z.dim(),
        });
    }
    let t = z.x.dot(&report.theta_hat);
    let f1 = report.loss_kind.d1(t, z.y);
    let f2 = report.loss_kind.d2(t, z.y);

    let mu_bar = report.mu_bar(&z.x)?;
    let arg = 1.0 - f2 * mu_bar;
    if arg <= 0.0 {
        return Err(Error::LogDomain(arg));
    }
    let term1 = (-(-f2 * mu_bar).ln_1p()).abs();

    let grad_norm = f1.abs() * z.x.norm();
    let sigma_sq = report.sigma * report.sigma;
    let term2 = grad_norm * grad_norm / (2.0 * sigma_sq);
    let term3 = report.g_bar(z)? / sigma_sq;

    let sens_hessian = f2 * z.x.norm_squared();
    let (eps2, eps3, eps4) = match report.mode {
        ReportMode::DataIndep => (0.0, 0.0, 0.0),
        ReportMode::DataDep => (
            gp_pdp(grad_norm, report.sigma2, delta, GpPdpMode::Pdp)?,
            pdp_of_hessian_release(sens_hessian, report.sigma3, delta)?,
            0.0,
        ),
        ReportMode::Adaptive => (
            gp_pdp(grad_norm, report.sigma2, delta, GpPdpMode::Pdp)?,
            pdp_of_hessian_release(sens_hessian, report.sigma3, delta)?,
            pdp_of_lambda_min(sens_hessian, report.sigma4, delta)?,
        ),
    };

    Ok(ReportEvaluation {
        eps1_bar: term1 + term2 + term3,
        eps2,
        eps3,
        eps4,
        term1,
        term2,
        term3,
    })
}

/// Replaces the cross-term pad with a union-bound version covering every
/// dataset member (`Dataset`) or the whole domain (`Domain`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadScope {
    Dataset { n: usize },
    Domain,
}

pub fn uniform_report_pad(report: &PrivacyReport, scope: PadScope) -> Result<PrivacyReport> {
    let pad = match scope {
        PadScope::Dataset { n } => {
            if n == 0 {
                return Err(Error::InvalidParameter("dataset scope needs n >= 1".into()));
            }
            CrossPad::UnionDataset { n }
        }
        PadScope::Domain => CrossPad::UnionDomain,
    };
    Ok(PrivacyReport {
        pad,
        ..report.clone()
    })
}

/// Worst-case DP of the report-building step: both Gaussian releases composed,
/// `xi^2/(2 s2^2) + beta^2/(4 s3^2) + sqrt(xi^2/s2^2 + beta^2/(2 s3^2)) sqrt(2 log(1/delta))`.
pub fn report_total_dp(report: &PrivacyReport, xi: f64, beta: f64, delta: f64) -> DpTarget {
    let s2 = report.sigma2;
    let s3 = report.sigma3;
    let epsilon = xi * xi / (2.0 * s2 * s2)
        + beta * beta / (4.0 * s3 * s3)
        + (xi * xi / (s2 * s2) + beta * beta / (2.0 * s3 * s3)).sqrt()
            * (2.0 * (1.0 / delta).ln()).sqrt();
    DpTarget { epsilon, delta }
}

/// On-disk report schema. Matrices are row-major arrays of rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRecord {
    pub mode: ReportMode,
    pub theta_hat: Vec<f64>,
    pub sigma: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub sigma4: f64,
    pub lambda: f64,
    pub rho: f64,
    pub tau: TauEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_hat: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_p: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_min_hat: Option<f64>,
    pub loss_kind: GlmLoss,
    #[serde(default = "default_pad", skip_serializing_if = "CrossPad::is_default")]
    pub pad: CrossPad,
}

fn default_pad() -> CrossPad {
    CrossPad::TwoSided
}

impl ReportRecord {
    pub fn from_report(report: &PrivacyReport) -> Self {
        Self {
            mode: report.mode,
            theta_hat: report.theta_hat.iter().cloned().collect(),
            sigma: report.sigma,
            sigma2: report.sigma2,
            sigma3: report.sigma3,
            sigma4: report.sigma4,
            lambda: report.lambda,
            rho: report.rho,
            tau: report.tau.clone(),
            h_hat: report.hessian.as_ref().map(|h| {
                h.h_hat
                    .row_iter()
                    .map(|row| row.iter().cloned().collect())
                    .collect()
            }),
            j_p: report
                .gradient
                .as_ref()
                .map(|g| g.j_p.iter().cloned().collect()),
            lambda_min_hat: report.lambda_min.as_ref().map(|l| l.value),
            loss_kind: report.loss_kind,
            pad: report.pad,
        }
    }

    pub fn into_report(self) -> Result<PrivacyReport> {
        let d = self.theta_hat.len();
        let hessian = match &self.h_hat {
            None => None,
            Some(rows) => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return Err(Error::InvalidParameter(
                        "released Hessian shape does not match theta_hat".into(),
                    ));
                }
                let flat: Vec<f64> = rows.iter().flatten().cloned().collect();
                Some(ReleasedHessian {
                    h_hat: DMatrix::from_row_slice(d, d, &flat),
                    sigma3: self.sigma3,
                    tau: self.tau.clone(),
                    rho: self.rho,
                })
            }
        };
        let gradient = self.j_p.as_ref().map(|v| ReleasedGradient {
            j_p: DVector::from_vec(v.clone()),
            sigma2: self.sigma2,
        });
        let lambda_min = self.lambda_min_hat.map(|value| {
            let lower_conf =
                (value - self.sigma4 * two_sided_pad(self.rho)).max(self.lambda);
            ReleasedLambdaMin {
                value,
                sigma4: self.sigma4,
                lower_conf,
            }
        });
        let mu_bar_spec = match self.mode {
            ReportMode::DataIndep => MuBarSpec::DataIndep,
            ReportMode::DataDep => MuBarSpec::Standard,
            ReportMode::Adaptive => {
                let lower = lambda_min
                    .as_ref()
                    .ok_or_else(|| {
                        Error::InvalidParameter(
                            "adaptive report requires lambda_min_hat".into(),
                        )
                    })?
                    .lower_conf;
                if lower >= 2.0 * self.tau.value * self.sigma3 {
                    MuBarSpec::AdaptiveStandard
                } else {
                    MuBarSpec::AdaptiveRegularized
                }
            }
        };
        Ok(PrivacyReport {
            mode: self.mode,
            theta_hat: DVector::from_vec(self.theta_hat),
            sigma: self.sigma,
            sigma2: self.sigma2,
            sigma3: self.sigma3,
            sigma4: self.sigma4,
            lambda: self.lambda,
            rho: self.rho,
            tau: self.tau,
            loss_kind: self.loss_kind,
            hessian,
            gradient,
            lambda_min,
            mu_bar_spec,
            pad: self.pad,
        })
    }
}
