//! Independent brute-force verifiers.
//!
//! `direct_log_odds` evaluates the absolute log-odds of observing the same
//! minimizer under a dataset and its neighbor straight from the noise density
//! and the change-of-variables Jacobian, with no reference to the three-term
//! decomposition in [`crate::accounting`]. It is the ground truth those
//! formulas are tested against.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::accounting::{gaussian_expost_pdp, leverage_product_factors, Direction, GaussianQuery};
use crate::error::{Error, Result};
use crate::glm::{data_grad, objective_hessian, DataPoint, Dataset, ObjectiveSpec};

/// Log-determinant of a symmetric positive-definite matrix via Cholesky.
fn spd_log_det(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m.clone().cholesky().ok_or(Error::NotPositiveDefinite)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

fn log_odds_from_parts(
    b_base: &DVector<f64>,
    b_neighbor: &DVector<f64>,
    h_base: &DMatrix<f64>,
    h_neighbor: &DMatrix<f64>,
    sigma: f64,
) -> Result<f64> {
    let ratio = (b_neighbor.norm_squared() - b_base.norm_squared()) / (2.0 * sigma * sigma)
        + spd_log_det(h_base)?
        - spd_log_det(h_neighbor)?;
    Ok(ratio.abs())
}

/// Exact ex-post privacy loss at `theta_hat` computed from the density ratio
/// of the noise vectors that map to it under `D` and `D +- z`.
///
/// The point need not be the solved optimum; the density identity holds at any
/// `theta_hat` in R^d.
pub fn direct_log_odds(
    theta_hat: &DVector<f64>,
    spec: &ObjectiveSpec,
    data: &Dataset,
    z: &DataPoint,
    dir: Direction,
    sigma: f64,
) -> Result<f64> {
    let neighbor = match dir {
        Direction::Add => data.with_added(z)?,
        Direction::Remove => data.with_removed(z)?,
    };
    let b_base = -data_grad(spec, data, theta_hat)?;
    let b_neighbor = -data_grad(spec, &neighbor, theta_hat)?;
    let h_base = objective_hessian(spec, data, theta_hat)?;
    let h_neighbor = objective_hessian(spec, &neighbor, theta_hat)?;
    log_odds_from_parts(&b_base, &b_neighbor, &h_base, &h_neighbor, sigma)
}

/// [`direct_log_odds`] for a synthetic target whose loss contribution at
/// `theta_hat` is given directly as a gradient and a PSD Hessian.
pub fn direct_log_odds_general(
    theta_hat: &DVector<f64>,
    spec: &ObjectiveSpec,
    data: &Dataset,
    z_grad: &DVector<f64>,
    z_hess: &DMatrix<f64>,
    dir: Direction,
    sigma: f64,
) -> Result<f64> {
    let b_base = -data_grad(spec, data, theta_hat)?;
    let h_base = objective_hessian(spec, data, theta_hat)?;
    let (b_neighbor, h_neighbor) = match dir {
        Direction::Add => (&b_base - z_grad, &h_base + z_hess),
        Direction::Remove => (&b_base + z_grad, &h_base - z_hess),
    };
    log_odds_from_parts(&b_base, &b_neighbor, &h_base, &h_neighbor, sigma)
}

/// Both sides of the determinant identity: the product of leverage factors
/// `prod (1 -+ mu_j)` and the direct ratio `det(H +- dH) / det(H)`.
pub fn det_ratio_check(
    h: &DMatrix<f64>,
    point_hess: &DMatrix<f64>,
    dir: Direction,
) -> Result<(f64, f64)> {
    let product: f64 = leverage_product_factors(h, point_hess, dir)?
        .iter()
        .product();
    let perturbed = match dir {
        Direction::Add => h + point_hess,
        Direction::Remove => h - point_hess,
    };
    // LU determinants: a separate route from the Cholesky-based recursion.
    let direct = perturbed.determinant() / h.determinant();
    Ok((product, direct))
}

/// Outcome of a Monte-Carlo coverage check.
#[derive(Debug, Clone, Copy)]
pub struct CoverageOutcome {
    pub violation_rate: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// Runs `sampler(trial) -> (value, bound)` and passes when the fraction of
/// `value > bound` stays within `rho` plus three binomial standard deviations.
pub fn coverage_test<F>(mut sampler: F, trials: usize, rho: f64) -> CoverageOutcome
where
    F: FnMut(usize) -> (f64, f64),
{
    assert!(trials >= 100, "coverage needs at least 100 trials");
    let mut violations = 0usize;
    for trial in 0..trials {
        let (value, bound) = sampler(trial);
        if value > bound {
            violations += 1;
        }
    }
    let violation_rate = violations as f64 / trials as f64;
    let threshold = rho + 3.0 * (rho * (1.0 - rho) / trials as f64).sqrt();
    CoverageOutcome {
        violation_rate,
        threshold,
        pass: violation_rate <= threshold,
    }
}

/// What the counting-query demo recovered.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DemoOutcome {
    Recovered(i64),
    /// Both inversion candidates were integral (a measure-zero tie).
    Ambiguous(i64, i64),
}

/// Result of one run of the privacy-risk demonstration.
#[derive(Debug, Clone, Copy)]
pub struct DemoResult {
    pub output: f64,
    pub eps_published: f64,
    pub outcome: DemoOutcome,
}

const DEMO_INT_TOL: f64 = 1e-6;

/// Reconstructs a counting-query value from the mechanism output and the
/// published ex-post privacy loss alone.
///
/// The attacker knows she is not in the dataset, so the sensitivity is one and
/// `Q(D) = o - 1/2 +- sigma^2 eps`; almost surely exactly one candidate is an
/// integer.
pub fn privacy_risk_demo<R: Rng + ?Sized>(q_of_d: u64, sigma: f64, rng: &mut R) -> Result<DemoResult> {
    let q = q_of_d as f64;
    let output = q + sigma * rng.sample::<f64, _>(StandardNormal);
    let query = GaussianQuery::new(
        DVector::from_vec(vec![q]),
        DVector::from_vec(vec![1.0]),
        sigma,
    )?;
    let eps_published = gaussian_expost_pdp(&query, &DVector::from_vec(vec![output]))?;

    let candidates = [
        output - 0.5 + sigma * sigma * eps_published,
        output - 0.5 - sigma * sigma * eps_published,
    ];
    let integral: Vec<i64> = candidates
        .iter()
        .filter(|c| (*c - c.round()).abs() <= DEMO_INT_TOL)
        .map(|c| c.round() as i64)
        .collect();
    let outcome = match integral.as_slice() {
        [only] => DemoOutcome::Recovered(*only),
        [a, b] => {
            if a == b {
                DemoOutcome::Recovered(*a)
            } else {
                DemoOutcome::Ambiguous(*a, *b)
            }
        }
        _ => unreachable!("one candidate equals Q(D) by construction"),
    };
    Ok(DemoResult {
        output,
        eps_published,
        outcome,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::accounting::expost_pdp_glm;
    use crate::glm::GlmLoss;
    use crate::solver::solve;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn vec1(v: f64) -> DVector<f64> {
        DVector::from_vec(vec![v])
    }

    #[test]
    fn oracle_reproduces_worked_example() {
        let spec = ObjectiveSpec::new(GlmLoss::Squared, 1.0).unwrap();
        let z = DataPoint::new(vec1(1.0), 0.0);
        let data = Dataset::new(1, vec![z.clone()]).unwrap();
        let eps =
            direct_log_odds(&vec1(0.5), &spec, &data, &z, Direction::Remove, 1.0).unwrap();
        assert_abs_diff_eq!(eps, 2.0_f64.ln() - 0.375, epsilon = 1e-12);
    }

    #[test]
    fn zero_contribution_point_has_zero_odds() {
        let spec = ObjectiveSpec::new(GlmLoss::Squared, 2.0).unwrap();
        let data = Dataset::new(1, vec![DataPoint::new(vec1(0.5), 0.25)]).unwrap();
        let z = DataPoint::new(vec1(0.0), 0.0);
        let eps = direct_log_odds(&vec1(1.5), &spec, &data, &z, Direction::Add, 1.0).unwrap();
        assert_abs_diff_eq!(eps, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn oracle_is_symmetric_in_the_dataset_pair() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        use rand::Rng;
        for _ in 0..20 {
            let d = rng.gen_range(1..=4usize);
            let spec = ObjectiveSpec::new(GlmLoss::Logistic, rng.gen_range(0.5..2.0)).unwrap();
            let mut points = Vec::new();
            for _ in 0..rng.gen_range(1..=6usize) {
                let mut x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
                x /= x.norm().max(1.0);
                points.push(DataPoint::new(x, f64::from(rng.gen_bool(0.5))));
            }
            let data = Dataset::new(d, points).unwrap();
            let z = data.point(0).clone();
            let smaller = data.with_removed(&z).unwrap();
            let theta = DVector::from_fn(d, |_, _| rng.gen_range(-2.0..2.0));

            let via_remove =
                direct_log_odds(&theta, &spec, &data, &z, Direction::Remove, 1.3).unwrap();
            let via_add =
                direct_log_odds(&theta, &spec, &smaller, &z, Direction::Add, 1.3).unwrap();
            assert_abs_diff_eq!(via_remove, via_add, epsilon = 1e-12);
        }
    }

    #[test]
    fn oracle_agrees_with_glm_accounting() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        use rand::Rng;
        for trial in 0..50 {
            let loss = if trial % 2 == 0 { GlmLoss::Logistic } else { GlmLoss::Squared };
            let d = rng.gen_range(1..=5usize);
            let spec = ObjectiveSpec::new(loss, rng.gen_range(0.4..2.5)).unwrap();
            let mut points = Vec::new();
            for _ in 0..rng.gen_range(1..=12usize) {
                let mut x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
                x /= x.norm().max(1.0);
                let y = if loss == GlmLoss::Logistic {
                    f64::from(rng.gen_bool(0.5))
                } else {
                    rng.gen_range(-1.0..1.0)
                };
                points.push(DataPoint::new(x, y));
            }
            let data = Dataset::new(d, points).unwrap();
            let sigma = rng.gen_range(0.5..3.0);
            let b = crate::solver::sample_noise(d, sigma, &mut rng);
            let model = solve(&spec, &data, &b, sigma).unwrap();

            let z = data.point(0).clone();
            for dir in [Direction::Add, Direction::Remove] {
                let claimed = expost_pdp_glm(&model, &spec, &data, &z, dir).unwrap().epsilon;
                let truth =
                    direct_log_odds(&model.theta_hat, &spec, &data, &z, dir, sigma).unwrap();
                assert!(
                    (claimed - truth).abs() <= 1e-6,
                    "trial {trial} {dir:?}: {claimed} vs {truth}"
                );
            }
        }
    }

    #[test]
    fn rank_one_determinant_identity() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        use rand::Rng;
        for _ in 0..30 {
            let d = rng.gen_range(1..=5usize);
            let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0f64));
            let h = &a * a.transpose() + DMatrix::from_diagonal_element(d, d, 1.0);
            let v = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
            let mut vvt = DMatrix::zeros(d, d);
            vvt.ger(1.0, &v, &v, 1.0);

            let (product, direct) = det_ratio_check(&h, &vvt, Direction::Add).unwrap();
            // 1 + v' H^{-1} v, evaluated independently
            let chol = h.clone().cholesky().unwrap();
            let textbook = 1.0 + v.dot(&chol.solve(&v));
            assert_abs_diff_eq!(product, textbook, epsilon = 1e-10 * textbook);
            assert_abs_diff_eq!(product, direct, epsilon = 1e-10 * direct.abs());
        }
    }

    #[test]
    fn zero_perturbation_gives_unit_ratio() {
        let h = DMatrix::from_diagonal_element(3, 3, 2.0);
        let (product, direct) = det_ratio_check(&h, &DMatrix::zeros(3, 3), Direction::Add).unwrap();
        assert_eq!(product, 1.0);
        assert_abs_diff_eq!(direct, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn log_det_matches_naive_determinant() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        use rand::Rng;
        for _ in 0..50 {
            let d = rng.gen_range(1..=6usize);
            let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0f64));
            let h = &a * a.transpose() + DMatrix::from_diagonal_element(d, d, 0.5);
            let via_chol = spd_log_det(&h).unwrap();
            let naive = h.determinant().ln();
            assert!(
                (via_chol - naive).abs() <= 1e-9 * naive.abs().max(1.0),
                "{via_chol} vs {naive}"
            );
        }
    }

    #[test]
    fn coverage_extremes() {
        let always = coverage_test(|_| (0.0, f64::INFINITY), 100, 0.05);
        assert_eq!(always.violation_rate, 0.0);
        assert!(always.pass);

        let never = coverage_test(|_| (0.0, f64::NEG_INFINITY), 100, 0.05);
        assert_eq!(never.violation_rate, 1.0);
        assert!(!never.pass);
    }

    #[test]
    fn demo_recovers_the_count() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        for q in [0u64, 7, 123] {
            for _ in 0..10 {
                let result = privacy_risk_demo(q, 2.0, &mut rng).unwrap();
                assert_eq!(result.outcome, DemoOutcome::Recovered(q as i64));
            }
        }
    }
}
