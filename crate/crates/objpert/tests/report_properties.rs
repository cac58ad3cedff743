//! Statistical properties of the adaptive report mode.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use objpert::accounting::{expost_pdp_glm, Direction};
use objpert::glm::{GlmLoss, ObjectiveSpec};
use objpert::release::{goe_quantile, sym_min_eigenvalue, TauMethod};
use objpert::report::{build_report, evaluate_report, ReleaseNoise, ReportMode};
use objpert::solver::{calibrate_gaussian_analytic, calibrate_objpert, sample_noise, solve, DpTarget};
use objpert::synth::{gen_synthetic, SyntheticKind};

/// With a well-conditioned Hessian (`lambda_min >= max(2 beta, 2 tau sigma3)`)
/// the adaptive report brackets the true loss within a `1 + C/lambda_min`
/// multiplicative factor plus the cross-term pad, `C = 4 tau sigma3 + 2 beta`.
#[test]
fn adaptive_report_utility() {
    let rho = 0.05;
    let (n, d) = (150usize, 8usize);
    let mut setup_rng = ChaCha20Rng::seed_from_u64(71);
    let data = gen_synthetic(SyntheticKind::Logistic, n, d, &mut setup_rng);
    let z = data.point(0).clone();

    let delta = 1e-6;
    let cal = calibrate_objpert(GlmLoss::Logistic, DpTarget::new(1.0, delta).unwrap()).unwrap();
    let sigma2 = calibrate_gaussian_analytic(1.0, DpTarget::new(1.0, delta).unwrap()).unwrap();
    let sigma3 = calibrate_gaussian_analytic(
        0.25 / std::f64::consts::SQRT_2,
        DpTarget::new(1.0, delta).unwrap(),
    )
    .unwrap();
    let sigma4 = calibrate_gaussian_analytic(0.25, DpTarget::new(1.0, delta).unwrap()).unwrap();
    let tau = goe_quantile(
        d,
        rho,
        &TauMethod::MonteCarlo {
            samples: 4000,
            seed: 72,
        },
    )
    .unwrap();

    let beta = GlmLoss::Logistic.beta();
    // pick lambda so the well-conditioning assumption holds with room
    let lambda = (2.0 * beta)
        .max(2.0 * tau.value * sigma3)
        .max(cal.lambda_min_required)
        * 1.5;
    let spec = ObjectiveSpec::new(GlmLoss::Logistic, lambda).unwrap();
    let noise = ReleaseNoise {
        sigma2,
        sigma3,
        sigma4,
    };
    let big_c = 4.0 * tau.value * sigma3 + 2.0 * beta;

    let trials = 1000usize;
    let mut ok = 0usize;
    for trial in 0..trials {
        let mut rng = ChaCha20Rng::seed_from_u64(73_000 + trial as u64);
        let b = sample_noise(d, cal.sigma, &mut rng);
        let model = solve(&spec, &data, &b, cal.sigma).unwrap();
        let hess = objpert::glm::objective_hessian(&spec, &data, &model.theta_hat).unwrap();
        let lambda_min = sym_min_eigenvalue(&hess);
        assert!(lambda_min >= (2.0 * beta).max(2.0 * tau.value * sigma3));

        let true_eps = expost_pdp_glm(&model, &spec, &data, &z, Direction::Remove)
            .unwrap()
            .epsilon;
        let report = build_report(
            &model,
            &spec,
            &data,
            ReportMode::Adaptive,
            noise,
            rho,
            &TauMethod::External(tau.value),
            &mut rng,
        )
        .unwrap();
        let eval = evaluate_report(&report, &z).unwrap();

        let f1 = GlmLoss::Logistic.d1(z.x.dot(&model.theta_hat), z.y);
        let pad = f1.abs() * z.x.norm() * (2.0 * (2.0 / rho).ln()).sqrt() / sigma2;
        let upper = (1.0 + big_c / lambda_min) * true_eps + pad;
        if true_eps <= eval.eps1_bar && eval.eps1_bar <= upper {
            ok += 1;
        }
    }

    let freq = ok as f64 / trials as f64;
    let threshold =
        1.0 - 3.0 * rho - 3.0 * (3.0 * rho * (1.0 - 3.0 * rho) / trials as f64).sqrt();
    println!("adaptive utility: frequency {freq:.4} >= {threshold:.4}");
    assert!(freq >= threshold, "frequency {freq} below {threshold}");
}
