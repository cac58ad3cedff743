use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use std::io::Write;
use std::path::Path;

use objpert::accounting::{
    data_indep_cross_bound, expost_pdp_glm, gaussian_expost_highprob, gaussian_expost_pdp,
    CrossBoundForm, Direction, GaussianQuery,
};
use objpert::error::{Error, Result};
use objpert::glm::{data_grad, point_grad, DataPoint, Dataset, GlmLoss, ObjectiveSpec};
use objpert::oracle::{
    coverage_test, det_ratio_check, direct_log_odds, privacy_risk_demo, DemoOutcome,
};
use objpert::release::{TauMethod, TauTable};
use objpert::report::{
    build_report, evaluate_report, PrivacyReport, ReleaseNoise, ReportEvaluation, ReportMode,
};
use objpert::solver::{
    calibrate_gaussian_analytic, calibrate_objpert, sample_noise, solve, DpTarget, ModelRecord,
};
use objpert::synth::{gen_synthetic, SyntheticKind};

pub fn gen(kind: SyntheticKind, n: usize, d: usize, seed: u64, out: &Path) -> Result<()> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidParameter("need n >= 1 and d >= 1".into()));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = gen_synthetic(kind, n, d, &mut rng);
    data.write_csv(out)?;
    println!("wrote {} points of dimension {} to {}", n, d, out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn train(
    data_path: &Path,
    loss: GlmLoss,
    eps: f64,
    delta: f64,
    inflate: f64,
    seed: u64,
    no_normalize: bool,
    out: &Path,
) -> Result<()> {
    if !inflate.is_finite() || inflate < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "inflation factor must be >= 1, got {inflate}"
        )));
    }
    let mut data = Dataset::read_csv(data_path)?;
    if !no_normalize {
        let scale = data.normalize();
        if scale != 1.0 {
            eprintln!("note: rescaled features by {scale:.6}");
        }
    }
    if loss == GlmLoss::Logistic && data.points().iter().any(|p| p.y != 0.0 && p.y != 1.0) {
        return Err(Error::InvalidParameter(
            "logistic labels must be 0 or 1".into(),
        ));
    }

    let cal = calibrate_objpert(loss, DpTarget::new(eps, delta)?)?;
    let lambda = inflate * cal.lambda_min_required;
    let spec = ObjectiveSpec::new(loss, lambda)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let b = sample_noise(data.d(), cal.sigma, &mut rng);
    let model = solve(&spec, &data, &b, cal.sigma)?;

    let record = ModelRecord::from_model(&model, loss, seed);
    record.save(out)?;
    println!(
        "trained on n={} d={}: sigma={:.6}, lambda={:.6} (required {:.6}), residual {:.2e}, {} iterations",
        data.n(),
        data.d(),
        cal.sigma,
        lambda,
        cal.lambda_min_required,
        model.grad_residual,
        model.iterations
    );
    Ok(())
}

/// Budget weights `e1,e2,e3[,e4]` normalized against the total budget.
pub fn parse_split(text: &str, total: f64) -> Result<Vec<f64>> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("bad split entry `{p}`: {e}")))
        })
        .collect::<Result<_>>()?;
    if parts.len() < 3 || parts.len() > 4 || parts.iter().any(|w| *w < 0.0) {
        return Err(Error::InvalidParameter(
            "split needs 3 or 4 nonnegative weights".into(),
        ));
    }
    let sum: f64 = parts.iter().sum();
    if sum <= 0.0 {
        return Err(Error::InvalidParameter("split weights sum to zero".into()));
    }
    Ok(parts.iter().map(|w| total * w / sum).collect())
}

/// A stored quantile is usable only for a nearby tail.
fn rho_compatible(entry_rho: f64, rho: f64) -> bool {
    entry_rho <= 2.0 * rho && rho <= 2.0 * entry_rho
}

/// Resolve the GOE quantile: explicit table first (falling back to the
/// built-in one), Monte-Carlo when the tail is reachable, the heuristic
/// asymptotic shape otherwise.
pub fn resolve_tau_method(
    d: usize,
    rho: f64,
    tau_file: Option<&Path>,
    mc_samples: usize,
    seed: u64,
) -> Result<TauMethod> {
    if let Some(path) = tau_file {
        let table = TauTable::load(path)?;
        match table.lookup(d, rho) {
            Some(entry) if rho_compatible(entry.rho, rho) => {
                return Ok(TauMethod::External(entry.tau));
            }
            _ => eprintln!(
                "note: no tau entry for d={d} near rho={rho:.3e} in {}, falling back",
                path.display()
            ),
        }
    } else if let Some(entry) = TauTable::builtin().lookup(d, rho) {
        if rho_compatible(entry.rho, rho) {
            return Ok(TauMethod::External(entry.tau));
        }
    }
    if rho / 2.0 >= 10.0 / mc_samples as f64 {
        Ok(TauMethod::MonteCarlo {
            samples: mc_samples,
            seed,
        })
    } else {
        eprintln!(
            "note: tail rho={rho:.1e} too deep for {mc_samples} Monte-Carlo samples; \
             using the asymptotic shape (heuristic, not a certified bound)"
        );
        Ok(TauMethod::Asymptotic)
    }
}

/// Release noise scales for a budget split at calibration tail `delta`.
pub fn noise_from_budget(
    loss: GlmLoss,
    eps2: f64,
    eps3: f64,
    eps4: Option<f64>,
    delta: f64,
) -> Result<ReleaseNoise> {
    let beta = loss.beta();
    let sigma2 = if eps2 > 0.0 {
        let xi = loss.xi().ok_or(Error::UnboundedGradient)?;
        calibrate_gaussian_analytic(xi, DpTarget::new(eps2, delta)?)?
    } else {
        0.0
    };
    let sigma3 = if eps3 > 0.0 {
        calibrate_gaussian_analytic(
            beta / std::f64::consts::SQRT_2,
            DpTarget::new(eps3, delta)?,
        )?
    } else {
        0.0
    };
    let sigma4 = match eps4 {
        Some(e4) if e4 > 0.0 => calibrate_gaussian_analytic(beta, DpTarget::new(e4, delta)?)?,
        _ => 0.0,
    };
    Ok(ReleaseNoise {
        sigma2,
        sigma3,
        sigma4,
    })
}

pub struct ReportArgs<'a> {
    pub model: &'a Path,
    pub data: &'a Path,
    pub mode: ReportMode,
    pub eps: f64,
    pub split: Option<&'a str>,
    pub sigma2: Option<f64>,
    pub sigma3: Option<f64>,
    pub sigma4: Option<f64>,
    pub delta: f64,
    pub rho: f64,
    pub tau_file: Option<&'a Path>,
    pub tau_mc_samples: usize,
    pub seed: u64,
    pub out: &'a Path,
    pub evals: &'a Path,
    pub with_ground_truth: bool,
}

pub fn report(args: ReportArgs<'_>) -> Result<()> {
    let record = ModelRecord::load(args.model)?;
    let model = record.to_model();
    let spec = record.spec()?;
    let data = Dataset::read_csv(args.data)?;
    if data.d() != model.theta_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: model.theta_hat.len(),
            got: data.d(),
        });
    }

    let mut noise = ReleaseNoise {
        sigma2: 0.0,
        sigma3: 0.0,
        sigma4: 0.0,
    };
    if args.mode != ReportMode::DataIndep {
        noise = if let Some(text) = args.split {
            let parts = parse_split(text, args.eps)?;
            noise_from_budget(
                record.loss_kind,
                parts[1],
                parts[2],
                parts.get(3).copied(),
                args.delta,
            )?
        } else if args.sigma2.is_some() || args.sigma3.is_some() {
            ReleaseNoise {
                sigma2: args.sigma2.unwrap_or(0.0),
                sigma3: args.sigma3.unwrap_or(0.0),
                sigma4: args.sigma4.unwrap_or(0.0),
            }
        } else {
            return Err(Error::InvalidParameter(
                "data-dependent mode needs --split or explicit --sigma2/--sigma3".into(),
            ));
        };
        if args.mode == ReportMode::Adaptive && noise.sigma4 == 0.0 {
            if let Some(s4) = args.sigma4 {
                noise.sigma4 = s4;
            } else {
                return Err(Error::InvalidParameter(
                    "adaptive mode needs a 4th split weight or --sigma4".into(),
                ));
            }
        }
    }

    let tau_method = if args.mode == ReportMode::DataIndep {
        TauMethod::External(0.0)
    } else {
        resolve_tau_method(
            data.d(),
            args.rho,
            args.tau_file,
            args.tau_mc_samples,
            args.seed.wrapping_add(0x7461_7531),
        )?
    };
    let mut rng = ChaCha20Rng::seed_from_u64(args.seed);
    let report = build_report(
        &model,
        &spec,
        &data,
        args.mode,
        noise,
        args.rho,
        &tau_method,
        &mut rng,
    )?;
    report.save(args.out)?;

    let rows = evaluate_all(&report, &data)?;
    let truths = if args.with_ground_truth {
        let t = (0..data.n())
            .into_par_iter()
            .map(|i| {
                expost_pdp_glm(&model, &spec, &data, data.point(i), Direction::Remove)
                    .map(|l| l.epsilon)
            })
            .collect::<Result<Vec<_>>>()?;
        Some(t)
    } else {
        None
    };
    write_eval_csv(args.evals, &rows, truths.as_deref())?;

    println!(
        "report ({:?}) written to {}; {} evaluations in {}",
        report.mode,
        args.out.display(),
        rows.len(),
        args.evals.display()
    );
    if args.with_ground_truth {
        eprintln!(
            "warning: {} contains ground-truth losses derived from raw records; not publishable",
            args.evals.display()
        );
    }
    Ok(())
}

pub fn evaluate_all(report: &PrivacyReport, data: &Dataset) -> Result<Vec<ReportEvaluation>> {
    (0..data.n())
        .into_par_iter()
        .map(|i| evaluate_report(report, data.point(i)))
        .collect()
}

fn write_eval_csv(
    path: &Path,
    rows: &[ReportEvaluation],
    truths: Option<&[f64]>,
) -> Result<()> {
    let mut buffer = Vec::new();
    {
        let mut writer = csv::Writer::from_writer(&mut buffer);
        let mut header = vec![
            "idx", "eps1_bar", "eps2", "eps3", "eps4", "term1", "term2", "term3",
        ];
        if truths.is_some() {
            header.push("true_eps1");
            header.push("ratio");
        }
        writer.write_record(&header)?;
        for (i, row) in rows.iter().enumerate() {
            let mut record = vec![
                i.to_string(),
                row.eps1_bar.to_string(),
                row.eps2.to_string(),
                row.eps3.to_string(),
                row.eps4.to_string(),
                row.term1.to_string(),
                row.term2.to_string(),
                row.term3.to_string(),
            ];
            if let Some(truths) = truths {
                record.push(truths[i].to_string());
                record.push((row.eps1_bar / truths[i]).to_string());
            }
            writer.write_record(&record)?;
        }
        writer.flush()?;
    }
    let mut file = std::fs::File::create(path)?;
    if truths.is_some() {
        writeln!(file, "# NON-PUBLISHABLE: contains losses derived from raw records")?;
    }
    file.write_all(&buffer)?;
    Ok(())
}

pub fn eval_points(report_path: &Path, data_path: &Path, out: &Path) -> Result<()> {
    let report = PrivacyReport::load(report_path)?;
    let points = Dataset::read_csv(data_path)?;
    let rows = evaluate_all(&report, &points)?;
    write_eval_csv(out, &rows, None)?;
    println!("evaluated {} points into {}", rows.len(), out.display());
    Ok(())
}

pub fn demo(q: u64, sigma: f64, seed: u64, trials: usize) -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for trial in 0..trials.max(1) {
        let result = privacy_risk_demo(q, sigma, &mut rng)?;
        match result.outcome {
            DemoOutcome::Recovered(v) => println!(
                "trial {trial}: output {:.6}, published eps {:.6} -> recovered Q(D) = {v}",
                result.output, result.eps_published
            ),
            DemoOutcome::Ambiguous(a, b) => println!(
                "trial {trial}: output {:.6}, published eps {:.6} -> ambiguous candidates {a}, {b}",
                result.output, result.eps_published
            ),
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verification suites

fn unit_ball_vector(d: usize, rng: &mut ChaCha20Rng) -> DVector<f64> {
    let mut x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0f64));
    let norm = x.norm();
    if norm > 1.0 {
        x /= norm;
    }
    x
}

fn random_point(d: usize, loss: GlmLoss, rng: &mut ChaCha20Rng) -> DataPoint {
    let y = match loss {
        GlmLoss::Logistic => f64::from(rng.gen_bool(0.5)),
        GlmLoss::Squared => rng.gen_range(-1.0..1.0),
    };
    DataPoint::new(unit_ball_vector(d, rng), y)
}

fn suite_logodds(seed: u64) -> Result<(f64, bool)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut max_residual: f64 = 0.0;
    for trial in 0..100 {
        let loss = if trial % 2 == 0 { GlmLoss::Logistic } else { GlmLoss::Squared };
        let d = rng.gen_range(1..=5usize);
        let n = rng.gen_range(1..=50usize);
        let spec = ObjectiveSpec::new(loss, rng.gen_range(0.3..3.0))?;
        let points = (0..n).map(|_| random_point(d, loss, &mut rng)).collect();
        let data = Dataset::new(d, points)?;
        let sigma = rng.gen_range(0.5..5.0);
        let b = sample_noise(d, sigma, &mut rng);
        let model = solve(&spec, &data, &b, sigma)?;
        let member = data.point(rng.gen_range(0..n)).clone();
        let fresh = random_point(d, loss, &mut rng);
        for (z, dir) in [(&member, Direction::Remove), (&fresh, Direction::Add)] {
            let claimed = expost_pdp_glm(&model, &spec, &data, z, dir)?.epsilon;
            let truth = direct_log_odds(&model.theta_hat, &spec, &data, z, dir, sigma)?;
            max_residual = max_residual.max((claimed - truth).abs());
        }
    }
    Ok((max_residual, max_residual <= 1e-6))
}

fn suite_det(seed: u64) -> Result<(f64, bool)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut max_rel: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.gen_range(1..=6usize);
        let lambda = rng.gen_range(0.5..3.0);
        let a = DMatrix::from_fn(d, d, |_, _| rng.gen_range(-1.0..1.0f64));
        let h = &a * a.transpose() + DMatrix::from_diagonal_element(d, d, lambda);
        let rank = rng.gen_range(0..=3usize.min(d));
        let mut dh = DMatrix::zeros(d, d);
        let basis = DMatrix::from_fn(d, rank, |_, _| rng.gen_range(-1.0..1.0f64)).qr().q();
        for k in 0..rank {
            let u = basis.column(k).into_owned();
            dh.ger(rng.gen_range(0.01..0.25) * lambda, &u, &u, 1.0);
        }
        for dir in [Direction::Add, Direction::Remove] {
            let (product, direct) = det_ratio_check(&h, &dh, dir)?;
            max_rel = max_rel.max((product - direct).abs() / direct.abs());
        }
    }
    Ok((max_rel, max_rel <= 1e-8))
}

fn suite_coverage(seed: u64) -> Result<(f64, bool)> {
    let rho = 0.05;

    // Gaussian mechanism ex-post bound
    let query = GaussianQuery::new(
        DVector::from_vec(vec![0.2]),
        DVector::from_vec(vec![0.9]),
        1.1,
    )?;
    let bound = gaussian_expost_highprob(&query, rho);
    let gaussian = coverage_test(
        |trial| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ (900_000 + trial as u64));
            let o = &query.q_of_d + sample_noise(1, query.sigma, &mut rng);
            (gaussian_expost_pdp(&query, &o).unwrap(), bound)
        },
        2000,
        rho,
    );

    // cross-term bound under full re-solves
    let mut setup = ChaCha20Rng::seed_from_u64(seed ^ 0xc0ffee);
    let spec = ObjectiveSpec::new(GlmLoss::Logistic, 1.0)?;
    let points = (0..30)
        .map(|_| random_point(4, GlmLoss::Logistic, &mut setup))
        .collect();
    let data = Dataset::new(4, points)?;
    let z = data.point(0).clone();
    let sigma = 5.0;
    let cross = coverage_test(
        |trial| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed ^ (700_000 + trial as u64));
            let b = sample_noise(4, sigma, &mut rng);
            let model = solve(&spec, &data, &b, sigma).unwrap();
            let value = data_grad(&spec, &data, &model.theta_hat)
                .unwrap()
                .dot(&point_grad(&spec, &z, &model.theta_hat))
                .abs();
            let bound = data_indep_cross_bound(
                GlmLoss::Logistic,
                sigma,
                &z,
                &model.theta_hat,
                rho,
                CrossBoundForm::Glm,
            );
            (value, bound)
        },
        1000,
        rho,
    );

    let worst = gaussian.violation_rate.max(cross.violation_rate);
    Ok((worst, gaussian.pass && cross.pass))
}

pub const ORACLE_SUITES: [&str; 4] = ["logodds", "det", "coverage", "all"];

/// Runs one (or all) verification suites; returns overall pass.
pub fn oracle(suite: &str, seed: u64) -> Result<bool> {
    let run_one = |name: &str| -> Result<bool> {
        let (metric, pass) = match name {
            "logodds" => {
                let (r, p) = suite_logodds(seed.wrapping_add(1))?;
                println!(
                    "suite logodds: max |accounting - density oracle| = {r:.3e} (tol 1e-6) {}",
                    if p { "PASS" } else { "FAIL" }
                );
                (r, p)
            }
            "det" => {
                let (r, p) = suite_det(seed.wrapping_add(2))?;
                println!(
                    "suite det: max relative determinant residual = {r:.3e} (tol 1e-8) {}",
                    if p { "PASS" } else { "FAIL" }
                );
                (r, p)
            }
            "coverage" => {
                let (r, p) = suite_coverage(seed.wrapping_add(3))?;
                println!(
                    "suite coverage: worst violation rate = {r:.4} at rho 0.05 {}",
                    if p { "PASS" } else { "FAIL" }
                );
                (r, p)
            }
            _ => unreachable!(),
        };
        let _ = metric;
        Ok(pass)
    };

    match suite {
        "all" => {
            let mut ok = true;
            for name in ["logodds", "det", "coverage"] {
                ok &= run_one(name)?;
            }
            Ok(ok)
        }
        "logodds" | "det" | "coverage" => run_one(suite),
        other => Err(Error::InvalidParameter(format!("unknown suite `{other}`"))),
    }
}
