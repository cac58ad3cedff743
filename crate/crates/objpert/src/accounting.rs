//! Closed-form privacy-loss computations.
//!
//! The central quantity is the ex-post per-instance loss of releasing the
//! perturbed minimizer: an absolute log-odds ratio that decomposes into a
//! leverage term (a log-determinant ratio), a squared-gradient term, and a
//! cross term between the objective gradient and the target's loss gradient.
//! The sign conventions below are pinned by the density-ratio oracle in
//! [`crate::oracle`]; every formula here is validated against it.

use nalgebra::{DMatrix, DVector};
use crate::error::{Error, Result};
use crate::glm::{data_grad, objective_hessian, DataPoint, Dataset, GlmLoss, ObjectiveSpec};
use crate::solver::{DpTarget, PerturbedModel};
use crate::stat::{normal_quantile, two_sided_pad};

/// Which neighboring dataset the loss is measured against: `Add` treats the
/// target as absent (`D + z`), `Remove` as present (`D - z`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Add,
    Remove,
}

/// Ex-post per-instance privacy loss with its three-term breakdown. The terms
/// are signed; `epsilon` is the absolute value of their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExPostPdpLoss {
    pub epsilon: f64,
    pub term_leverage: f64,
    pub term_gradsq: f64,
    pub term_cross: f64,
    pub direction: Direction,
}

impl ExPostPdpLoss {
    fn assemble(term_leverage: f64, term_gradsq: f64, term_cross: f64, direction: Direction) -> Self {
        Self {
            epsilon: (term_leverage + term_gradsq + term_cross).abs(),
            term_leverage,
            term_gradsq,
            term_cross,
            direction,
        }
    }
}

/// A vector-valued statistic released through the Gaussian mechanism, with the
/// per-instance sensitivity vector of the queried individual.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianQuery {
    pub q_of_d: DVector<f64>,
    pub sensitivity_vec: DVector<f64>,
    pub sigma: f64,
}

impl GaussianQuery {
    pub fn new(q_of_d: DVector<f64>, sensitivity_vec: DVector<f64>, sigma: f64) -> Result<Self> {
        if q_of_d.len() != sensitivity_vec.len() {
            return Err(Error::DimensionMismatch {
                expected: q_of_d.len(),
                got: sensitivity_vec.len(),
            });
        }
        Ok(Self {
            q_of_d,
            sensitivity_vec,
            sigma,
        })
    }
}

/// Generalized leverage score `x' H^{-1} x`, via a Cholesky solve.
pub fn leverage_score(h: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    if h.nrows() != x.len() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            got: x.len(),
        });
    }
    let chol = h.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(x.dot(&chol.solve(x)))
}

fn require_positive_sigma(sigma: f64) -> Result<f64> {
    if sigma > 0.0 {
        Ok(sigma)
    } else {
        Err(Error::InvalidParameter(format!(
            "positive noise scale required, got {sigma}"
        )))
    }
}

/// Ex-post pDP loss for a generalized linear loss.
///
/// Uses the rank-one structure of the per-point Hessian: the leverage term is
/// `-log(1 + f'' mu)` when adding and `-log(1 - f'' mu)` when removing, with
/// `mu = x' H^{-1} x` for the objective Hessian `H` on the given dataset. The
/// cross term evaluates `grad J` on that dataset, which for a solved model
/// equals `-b` to solver tolerance; evaluating it directly keeps the value
/// equal to the density log-odds for any `theta_hat`/dataset pairing, solved
/// or not.
pub fn expost_pdp_glm(
    model: &PerturbedModel,
    spec: &ObjectiveSpec,
    data: &Dataset,
    z: &DataPoint,
    dir: Direction,
) -> Result<ExPostPdpLoss> {
    let sigma = require_positive_sigma(model.sigma)?;
    let hess = objective_hessian(spec, data, &model.theta_hat)?;
    let mu = leverage_score(&hess, &z.x)?;

    let t = z.x.dot(&model.theta_hat);
    let f1 = spec.loss.d1(t, z.y);
    let f2 = spec.loss.d2(t, z.y);

    let signed = match dir {
        Direction::Add => f2 * mu,
        Direction::Remove => -f2 * mu,
    };
    if 1.0 + signed <= 0.0 {
        return Err(Error::LogDomain(1.0 + signed));
    }
    let term_leverage = -signed.ln_1p();

    let grad_z = f1 * &z.x;
    let term_gradsq = grad_z.norm_squared() / (2.0 * sigma * sigma);

    let grad_j = data_grad(spec, data, &model.theta_hat)?;
    let cross = grad_j.dot(&grad_z) / (sigma * sigma);
    let term_cross = match dir {
        Direction::Add => cross,
        Direction::Remove => -cross,
    };

    Ok(ExPostPdpLoss::assemble(
        term_leverage,
        term_gradsq,
        term_cross,
        dir,
    ))
}

/// Eigen-pairs of a symmetric PSD per-point Hessian, largest first, with
/// numerically-zero eigenvalues dropped.
fn psd_eigen_pairs(point_hess: &DMatrix<f64>) -> Result<Vec<(f64, DVector<f64>)>> {
    let eig = point_hess.clone().symmetric_eigen();
    let scale = eig.eigenvalues.amax().max(1.0);
    let mut pairs = Vec::new();
    for (j, &val) in eig.eigenvalues.iter().enumerate() {
        if val < -1e-10 * scale {
            return Err(Error::NonPsdHessian(val));
        }
        if val > 1e-14 * scale {
            pairs.push((val, eig.eigenvectors.column(j).into_owned()));
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(pairs)
}

/// The factors `1 -+ mu_j` of the leverage product, by recursive rank-one
/// application of the matrix determinant lemma. Their product equals
/// `det(H_{D +- z}) / det(H_D)`.
pub fn leverage_product_factors(
    h: &DMatrix<f64>,
    point_hess: &DMatrix<f64>,
    dir: Direction,
) -> Result<Vec<f64>> {
    if h.nrows() != point_hess.nrows() {
        return Err(Error::DimensionMismatch {
            expected: h.nrows(),
            got: point_hess.nrows(),
        });
    }
    let pairs = psd_eigen_pairs(point_hess)?;
    let mut m = h.clone();
    let mut factors = Vec::with_capacity(pairs.len());
    for (val, u) in pairs {
        let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
        let q = val * u.dot(&chol.solve(&u));
        let factor = match dir {
            Direction::Add => 1.0 + q,
            Direction::Remove => 1.0 - q,
        };
        if factor <= 0.0 {
            return Err(Error::LogDomain(factor));
        }
        factors.push(factor);
        match dir {
            Direction::Add => m.ger(val, &u, &u, 1.0),
            Direction::Remove => m.ger(-val, &u, &u, 1.0),
        }
    }
    Ok(factors)
}

/// Ex-post pDP loss for a general convex loss, given the target's gradient and
/// (symmetric PSD) Hessian contribution at the solved point.
pub fn expost_pdp_general(
    model: &PerturbedModel,
    spec: &ObjectiveSpec,
    data: &Dataset,
    point_grad: &DVector<f64>,
    point_hess: &DMatrix<f64>,
    dir: Direction,
) -> Result<ExPostPdpLoss> {
    let sigma = require_positive_sigma(model.sigma)?;
    let hess = objective_hessian(spec, data, &model.theta_hat)?;
    let factors = leverage_product_factors(&hess, point_hess, dir)?;
    let term_leverage = -factors.iter().map(|f| f.ln()).sum::<f64>();

    let term_gradsq = point_grad.norm_squared() / (2.0 * sigma * sigma);
    let grad_j = data_grad(spec, data, &model.theta_hat)?;
    let cross = grad_j.dot(point_grad) / (sigma * sigma);
    let term_cross = match dir {
        Direction::Add => cross,
        Direction::Remove => -cross,
    };

    Ok(ExPostPdpLoss::assemble(
        term_leverage,
        term_gradsq,
        term_cross,
        dir,
    ))
}

/// Exact ex-post pDP of the Gaussian mechanism at output `o`.
pub fn gaussian_expost_pdp(query: &GaussianQuery, o: &DVector<f64>) -> Result<f64> {
    if o.len() != query.q_of_d.len() {
        return Err(Error::DimensionMismatch {
            expected: query.q_of_d.len(),
            got: o.len(),
        });
    }
    let delta_norm_sq = query.sensitivity_vec.norm_squared();
    if query.sigma == 0.0 {
        return if delta_norm_sq == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::InfinitePrivacyLoss)
        };
    }
    let s2 = query.sigma * query.sigma;
    let centered = o - &query.q_of_d;
    Ok((delta_norm_sq / (2.0 * s2) - query.sensitivity_vec.dot(&centered) / s2).abs())
}

/// Dataset-independent pDP bound of the Gaussian mechanism at tail mass `delta`.
pub fn gaussian_pdp_bound(query: &GaussianQuery, delta: f64) -> f64 {
    let norm = query.sensitivity_vec.norm();
    let s = query.sigma;
    norm * norm / (2.0 * s * s) + norm * normal_quantile(1.0 - delta) / s
}

/// High-probability (level `1 - rho`) bound on the ex-post pDP of the Gaussian
/// mechanism, two-sided in the realized noise.
pub fn gaussian_expost_highprob(query: &GaussianQuery, rho: f64) -> f64 {
    let norm = query.sensitivity_vec.norm();
    let s = query.sigma;
    norm * norm / (2.0 * s * s) + norm * two_sided_pad(rho) / s
}

/// The looser `sqrt(2 log(2/rho))` form of [`gaussian_expost_highprob`].
pub fn gaussian_expost_highprob_loose(query: &GaussianQuery, rho: f64) -> f64 {
    let norm = query.sensitivity_vec.norm();
    let s = query.sigma;
    norm * norm / (2.0 * s * s) + norm * (2.0 * (2.0 / rho).ln()).sqrt() / s
}

/// Scalar tail-bound pDP of a Gaussian release with the given sensitivity:
/// `s^2/(2 sigma^2) + s sqrt(2 log(1/delta)) / sigma`. Shared by every noisy
/// release in [`crate::release`].
pub fn gaussian_pdp_tailbound(sensitivity: f64, sigma: f64, delta: f64) -> Result<f64> {
    if sigma == 0.0 {
        return if sensitivity == 0.0 {
            Ok(0.0)
        } else {
            Err(Error::InfinitePrivacyLoss)
        };
    }
    Ok(sensitivity * sensitivity / (2.0 * sigma * sigma)
        + sensitivity * (2.0 * (1.0 / delta).ln()).sqrt() / sigma)
}

/// Data-independent bound on the leverage term for a GLM:
/// `-log(1 - f''(x' theta; y) ||x||^2 / lambda)`.
pub fn data_indep_leverage_bound(
    loss: GlmLoss,
    lambda: f64,
    z: &DataPoint,
    theta_hat: &DVector<f64>,
) -> Result<f64> {
    let f2 = loss.d2(z.x.dot(theta_hat), z.y);
    let eig = f2 * z.x.norm_squared();
    data_indep_leverage_bound_eigs(lambda, &[eig])
}

/// General form of the data-independent leverage bound:
/// `-sum_j log(1 - lambda_j / lambda)` over per-point Hessian eigenvalues.
pub fn data_indep_leverage_bound_eigs(lambda: f64, eigs: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for &eig in eigs {
        if eig >= lambda {
            return Err(Error::BoundDomain { eig, lambda });
        }
        total -= (-eig / lambda).ln_1p();
    }
    Ok(total)
}

/// Which data-independent cross-term bound to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrossBoundForm {
    /// `|f'| sigma ||x||_2 sqrt(2 log(2/rho))`, linear losses only.
    Glm,
    /// `sigma sqrt(2 log(2d/rho)) ||grad l||_1`, any convex loss.
    GeneralL1,
}

/// High-probability data-independent bound on `|grad J' grad l|`.
pub fn data_indep_cross_bound(
    loss: GlmLoss,
    sigma: f64,
    z: &DataPoint,
    theta_hat: &DVector<f64>,
    rho: f64,
    form: CrossBoundForm,
) -> f64 {
    let f1 = loss.d1(z.x.dot(theta_hat), z.y);
    match form {
        CrossBoundForm::Glm => f1.abs() * sigma * z.x.norm() * (2.0 * (2.0 / rho).ln()).sqrt(),
        CrossBoundForm::GeneralL1 => {
            let d = z.dim() as f64;
            let grad_l1 = f1.abs() * z.x.iter().map(|v| v.abs()).sum::<f64>();
            sigma * (2.0 * (2.0 * d / rho).ln()).sqrt() * grad_l1
        }
    }
}

/// Packages a high-probability privacy-loss bound as a two-sided `(eps, delta)`
/// pair; pure bookkeeping.
pub fn tailbound_to_dp(epsilon: f64, delta: f64) -> DpTarget {
    DpTarget { epsilon, delta }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glm::{point_grad, point_hessian};
    use crate::solver::solve;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn vec1(v: f64) -> DVector<f64> {
        DVector::from_vec(vec![v])
    }

    #[test]
    fn leverage_of_diagonal_matrix() {
        let h = DMatrix::from_diagonal_element(2, 2, 2.0);
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        assert_abs_diff_eq!(leverage_score(&h, &e1).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(leverage_score(&h, &DVector::zeros(2)).unwrap(), 0.0);
    }

    #[test]
    fn leverage_bounded_by_min_eigenvalue() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..100 {
            let d = rng.gen_range(1..=6usize);
            let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0f64));
            let h = &a * a.transpose() + DMatrix::from_diagonal_element(d, d, rng.gen_range(0.1..2.0));
            let x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
            let mu = leverage_score(&h, &x).unwrap();
            let min_eig = h
                .symmetric_eigenvalues()
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min);
            assert!(mu >= 0.0);
            assert!(mu <= x.norm_squared() / min_eig + 1e-10);
        }
    }

    #[test]
    fn leverage_rejects_indefinite_matrix() {
        let h = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(
            leverage_score(&h, &DVector::from_vec(vec![1.0, 1.0])),
            Err(Error::NotPositiveDefinite)
        ));
    }

    /// The worked single-point example: squared loss, D = {(1, 0)}, lambda = 1,
    /// sigma = 1, b = -1 gives theta_hat = 0.5; removing the point costs
    /// |-log(1/2) + 1/8 - 1/2| = 0.31815.
    fn worked_example() -> (PerturbedModel, ObjectiveSpec, Dataset, DataPoint) {
        let spec = ObjectiveSpec::new(GlmLoss::Squared, 1.0).unwrap();
        let z = DataPoint::new(vec1(1.0), 0.0);
        let data = Dataset::new(1, vec![z.clone()]).unwrap();
        let model = solve(&spec, &data, &vec1(-1.0), 1.0).unwrap();
        (model, spec, data, z)
    }

    #[test]
    fn glm_remove_matches_hand_computation() {
        let (model, spec, data, z) = worked_example();
        let loss = expost_pdp_glm(&model, &spec, &data, &z, Direction::Remove).unwrap();
        assert_abs_diff_eq!(loss.term_leverage, 2.0_f64.ln(), epsilon = 1e-10);
        assert_abs_diff_eq!(loss.term_gradsq, 0.125, epsilon = 1e-10);
        assert_abs_diff_eq!(loss.term_cross, -0.5, epsilon = 1e-10);
        // |log 2 + 1/8 - 1/2| = log 2 - 3/8
        assert_abs_diff_eq!(loss.epsilon, 2.0_f64.ln() - 0.375, epsilon = 1e-10);
        assert_abs_diff_eq!(loss.epsilon, 0.318_147_180_559_945_3, epsilon = 1e-9);
    }

    #[test]
    fn zero_feature_vector_contributes_nothing() {
        let (model, spec, data, _) = worked_example();
        let z0 = DataPoint::new(vec1(0.0), 1.0);
        let loss = expost_pdp_glm(&model, &spec, &data, &z0, Direction::Add).unwrap();
        assert_eq!(loss.term_leverage, 0.0);
        assert_eq!(loss.epsilon, 0.0);
    }

    #[test]
    fn add_then_remove_are_consistent() {
        let mut rng = ChaCha20Rng::seed_from_u64(41);
        for trial in 0..20 {
            let loss_kind = if trial % 2 == 0 { GlmLoss::Logistic } else { GlmLoss::Squared };
            let d = rng.gen_range(1..=4usize);
            let spec = ObjectiveSpec::new(loss_kind, rng.gen_range(0.5..2.0)).unwrap();
            let mut points = Vec::new();
            for _ in 0..rng.gen_range(1..=10usize) {
                let mut x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
                x /= x.norm().max(1.0);
                let y = if loss_kind == GlmLoss::Logistic {
                    f64::from(rng.gen_bool(0.5))
                } else {
                    rng.gen_range(-1.0..1.0)
                };
                points.push(DataPoint::new(x, y));
            }
            let data = Dataset::new(d, points).unwrap();
            let mut x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
            x /= x.norm().max(1.0);
            let z = DataPoint::new(x, 1.0);
            let b = crate::solver::sample_noise(d, 2.0, &mut rng);
            let model = solve(&spec, &data, &b, 2.0).unwrap();

            let added = data.with_added(&z).unwrap();
            let eps_add = expost_pdp_glm(&model, &spec, &data, &z, Direction::Add)
                .unwrap()
                .epsilon;
            let eps_remove = expost_pdp_glm(&model, &spec, &added, &z, Direction::Remove)
                .unwrap()
                .epsilon;
            assert!(
                (eps_add - eps_remove).abs() < 1e-10,
                "trial {trial}: add {eps_add} vs remove {eps_remove}"
            );
        }
    }

    #[test]
    fn general_path_matches_glm_path_on_rank_one_input() {
        let mut rng = ChaCha20Rng::seed_from_u64(43);
        for trial in 0..30 {
            let loss_kind = if trial % 2 == 0 { GlmLoss::Logistic } else { GlmLoss::Squared };
            let d = rng.gen_range(1..=5usize);
            let spec = ObjectiveSpec::new(loss_kind, rng.gen_range(0.5..2.0)).unwrap();
            let mut points = Vec::new();
            for _ in 0..rng.gen_range(1..=8usize) {
                let mut x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
                x /= x.norm().max(1.0);
                let y = if loss_kind == GlmLoss::Logistic {
                    f64::from(rng.gen_bool(0.5))
                } else {
                    rng.gen_range(-1.0..1.0)
                };
                points.push(DataPoint::new(x, y));
            }
            let data = Dataset::new(d, points).unwrap();
            let z = data.point(0).clone();
            let b = crate::solver::sample_noise(d, 1.5, &mut rng);
            let model = solve(&spec, &data, &b, 1.5).unwrap();

            for dir in [Direction::Add, Direction::Remove] {
                let glm = expost_pdp_glm(&model, &spec, &data, &z, dir).unwrap();
                let general = expost_pdp_general(
                    &model,
                    &spec,
                    &data,
                    &point_grad(&spec, &z, &model.theta_hat),
                    &point_hessian(&spec, &z, &model.theta_hat),
                    dir,
                )
                .unwrap();
                assert!(
                    (glm.epsilon - general.epsilon).abs() < 1e-10,
                    "trial {trial} {dir:?}: {} vs {}",
                    glm.epsilon,
                    general.epsilon
                );
            }
        }
    }

    #[test]
    fn zero_point_hessian_has_no_leverage_term() {
        let (model, spec, data, _) = worked_example();
        let zero_h = DMatrix::zeros(1, 1);
        let g = vec1(0.25);
        let loss =
            expost_pdp_general(&model, &spec, &data, &g, &zero_h, Direction::Add).unwrap();
        assert_eq!(loss.term_leverage, 0.0);
        assert!(loss.epsilon > 0.0);
    }

    #[test]
    fn general_path_rejects_negative_eigenvalues() {
        let (model, spec, data, _) = worked_example();
        let bad = DMatrix::from_diagonal(&vec1(-0.5));
        let res = expost_pdp_general(&model, &spec, &data, &vec1(0.0), &bad, Direction::Add);
        assert!(matches!(res, Err(Error::NonPsdHessian(_))));
    }

    #[test]
    fn remove_of_non_member_surfaces_log_domain() {
        // Removing a unit-leverage point that is not in D drives the factor
        // 1 - f'' mu to zero or below.
        let spec = ObjectiveSpec::new(GlmLoss::Squared, 0.4).unwrap();
        let data = Dataset::empty(1);
        let model = solve(&spec, &data, &vec1(0.0), 1.0).unwrap();
        let z = DataPoint::new(vec1(1.0), 0.0);
        let res = expost_pdp_glm(&model, &spec, &data, &z, Direction::Remove);
        assert!(matches!(res, Err(Error::LogDomain(_))));
    }

    #[test]
    fn gaussian_expost_matches_hand_values() {
        let query = GaussianQuery::new(vec1(0.0), vec1(1.0), 1.0).unwrap();
        assert_abs_diff_eq!(
            gaussian_expost_pdp(&query, &vec1(0.5)).unwrap(),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            gaussian_expost_pdp(&query, &vec1(0.0)).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn gaussian_expost_zero_sigma() {
        let ok = GaussianQuery::new(vec1(0.0), vec1(0.0), 0.0).unwrap();
        assert_eq!(gaussian_expost_pdp(&ok, &vec1(1.0)).unwrap(), 0.0);
        let bad = GaussianQuery::new(vec1(0.0), vec1(1.0), 0.0).unwrap();
        assert!(matches!(
            gaussian_expost_pdp(&bad, &vec1(1.0)),
            Err(Error::InfinitePrivacyLoss)
        ));
    }

    #[test]
    fn gaussian_expost_scale_invariance() {
        let mut rng = ChaCha20Rng::seed_from_u64(47);
        for _ in 0..50 {
            let d = rng.gen_range(1..=4usize);
            let q = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0f64));
            let delta = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
            let sigma = rng.gen_range(0.5..2.0);
            let o = DVector::from_fn(d, |_, _| rng.gen_range(-3.0..3.0f64));
            let c: f64 = rng.gen_range(0.1..5.0);

            let base = GaussianQuery::new(q.clone(), delta.clone(), sigma).unwrap();
            let eps = gaussian_expost_pdp(&base, &o).unwrap();

            let scaled = GaussianQuery::new(q.clone(), c * &delta, c * sigma).unwrap();
            let o_scaled = &q + c * (&o - &q);
            let eps_scaled = gaussian_expost_pdp(&scaled, &o_scaled).unwrap();
            assert_abs_diff_eq!(eps, eps_scaled, epsilon = 1e-10);
        }
    }

    #[test]
    fn gaussian_expost_even_around_midpoint() {
        let query = GaussianQuery::new(vec1(0.3), vec1(0.8), 1.3).unwrap();
        let mid = 0.3 + 0.4; // Q(D) + Delta/2
        for &offset in &[0.1, 0.5, 2.0] {
            let left = gaussian_expost_pdp(&query, &vec1(mid - offset)).unwrap();
            let right = gaussian_expost_pdp(&query, &vec1(mid + offset)).unwrap();
            assert_abs_diff_eq!(left, right, epsilon = 1e-12);
        }
    }

    #[test]
    fn pdp_bound_at_half_delta_is_median() {
        let query = GaussianQuery::new(vec1(0.0), vec1(1.0), 1.0).unwrap();
        assert_abs_diff_eq!(gaussian_pdp_bound(&query, 0.5), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn highprob_pad_dominated_by_loose_form() {
        let query = GaussianQuery::new(vec1(0.0), vec1(1.0), 1.0).unwrap();
        for k in 2..=8 {
            let rho = 10f64.powi(-k);
            assert!(
                gaussian_expost_highprob(&query, rho)
                    <= gaussian_expost_highprob_loose(&query, rho) + 1e-12,
                "rho = {rho}"
            );
        }
    }

    #[test]
    fn highprob_coverage() {
        let mut rng = ChaCha20Rng::seed_from_u64(53);
        let rho = 0.05;
        let query = GaussianQuery::new(vec1(1.0), vec1(0.7), 1.2).unwrap();
        let bound = gaussian_expost_highprob(&query, rho);
        let trials = 100_000;
        let mut violations = 0usize;
        for _ in 0..trials {
            let noise: f64 = rng.sample(rand_distr::StandardNormal);
            let o = &query.q_of_d + DVector::from_vec(vec![query.sigma * noise]);
            if gaussian_expost_pdp(&query, &o).unwrap() > bound {
                violations += 1;
            }
        }
        let rate = violations as f64 / trials as f64;
        let slack = 3.0 * (rho * (1.0 - rho) / trials as f64).sqrt();
        assert!(rate <= rho + slack, "violation rate {rate}");
    }

    #[test]
    fn leverage_bound_worked_values() {
        // f'' = 1/4, ||x||^2 = 1, lambda = 1/2 -> log 2
        assert_abs_diff_eq!(
            data_indep_leverage_bound_eigs(0.5, &[0.25]).unwrap(),
            2.0_f64.ln(),
            epsilon = 1e-12
        );
        // eigenvalues {lambda/2, lambda/4} -> log 2 + log(4/3)
        assert_abs_diff_eq!(
            data_indep_leverage_bound_eigs(1.0, &[0.5, 0.25]).unwrap(),
            2.0_f64.ln() + (4.0_f64 / 3.0).ln(),
            epsilon = 1e-12
        );
        assert_eq!(data_indep_leverage_bound_eigs(1.0, &[0.0]).unwrap(), 0.0);
        assert!(matches!(
            data_indep_leverage_bound_eigs(0.2, &[0.25]),
            Err(Error::BoundDomain { .. })
        ));
    }

    #[test]
    fn leverage_bound_dominates_leverage_term() {
        let mut rng = ChaCha20Rng::seed_from_u64(59);
        for trial in 0..200 {
            let loss_kind = if trial % 2 == 0 { GlmLoss::Logistic } else { GlmLoss::Squared };
            let d = rng.gen_range(1..=4usize);
            // keep lambda above the squared-loss curvature bound of 1
            let lambda = rng.gen_range(1.05..3.0);
            let spec = ObjectiveSpec::new(loss_kind, lambda).unwrap();
            let mut points = Vec::new();
            for _ in 0..rng.gen_range(0..=10usize) {
                let mut x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
                x /= x.norm().max(1.0);
                points.push(DataPoint::new(x, rng.gen_range(-1.0..1.0f64).round().max(0.0)));
            }
            let data = Dataset::new(d, points).unwrap();
            let b = crate::solver::sample_noise(d, 1.0, &mut rng);
            let model = solve(&spec, &data, &b, 1.0).unwrap();
            let mut x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
            x /= x.norm().max(1.0);
            let z = DataPoint::new(x, 1.0);
            let bound = data_indep_leverage_bound(loss_kind, lambda, &z, &model.theta_hat).unwrap();
            for dir in [Direction::Add, Direction::Remove] {
                let lev = expost_pdp_glm(&model, &spec, &data, &z, dir)
                    .unwrap()
                    .term_leverage;
                assert!(
                    lev.abs() <= bound + 1e-12,
                    "trial {trial} {dir:?}: |{lev}| vs {bound}"
                );
            }
        }
    }

    #[test]
    fn cross_bound_zero_when_gradient_vanishes() {
        let z = DataPoint::new(vec1(1.0), 0.0);
        let theta = vec1(0.0);
        // squared loss with y = x' theta has f' = 0
        let b = data_indep_cross_bound(GlmLoss::Squared, 2.0, &z, &theta, 0.05, CrossBoundForm::Glm);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn glm_cross_bound_dominated_by_general_form() {
        let mut rng = ChaCha20Rng::seed_from_u64(61);
        for _ in 0..100 {
            let d = rng.gen_range(1..=6usize);
            let mut x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
            x /= x.norm().max(1.0);
            let z = DataPoint::new(x, 1.0);
            let theta = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));
            let rho = 0.05;
            let glm = data_indep_cross_bound(GlmLoss::Logistic, 1.7, &z, &theta, rho, CrossBoundForm::Glm);
            let gen = data_indep_cross_bound(
                GlmLoss::Logistic,
                1.7,
                &z,
                &theta,
                rho,
                CrossBoundForm::GeneralL1,
            );
            assert!(glm <= gen + 1e-12, "{glm} vs {gen}");
        }
    }

    #[test]
    fn tailbound_packaging_is_identity() {
        let t = tailbound_to_dp(1.0, 1e-6);
        assert_eq!(t.epsilon, 1.0);
        assert_eq!(t.delta, 1e-6);
        let zero = tailbound_to_dp(0.0, 0.3);
        assert_eq!(zero.epsilon, 0.0);
    }

    #[test]
    fn shared_tail_formula() {
        // s=1, sigma=10, delta=1e-6: 1/200 + sqrt(2 log 1e6)/10
        let v = gaussian_pdp_tailbound(1.0, 10.0, 1e-6).unwrap();
        let expected = 0.005 + (2.0 * 1e6_f64.ln()).sqrt() / 10.0;
        assert_abs_diff_eq!(v, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.5307, epsilon = 1e-4);
        assert_eq!(gaussian_pdp_tailbound(0.0, 0.0, 1e-6).unwrap(), 0.0);
        assert!(matches!(
            gaussian_pdp_tailbound(1.0, 0.0, 1e-6),
            Err(Error::InfinitePrivacyLoss)
        ));
    }
}
