//! Reproducible experiment harness emitting plot-ready CSV/JSON.

use clap::ValueEnum;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

use objpert::accounting::{expost_pdp_glm, Direction};
use objpert::error::{Error, Result};
use objpert::glm::{Dataset, GlmLoss, ObjectiveSpec};
use objpert::report::{build_report, ReleaseNoise, ReportMode};
use objpert::solver::{calibrate_objpert, sample_noise, solve, DpTarget, PerturbedModel};
use objpert::stat::two_sided_pad;
use objpert::synth::{gen_synthetic, zero_one_loss, SyntheticKind};

use crate::commands::{noise_from_budget, parse_split, resolve_tau_method};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentKind {
    /// Holdout 0-1 loss across regularization inflation factors.
    LambdaSweep,
    /// Per-individual true losses and released upper bounds, both modes.
    PdpHist,
    /// Report quality across privacy-budget splits.
    BudgetSweep,
    /// Worst-case versus realized losses as the dataset grows.
    VaryN,
    /// The same across feature dimensions.
    VaryD,
}

pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub n: usize,
    pub d: usize,
    pub eps: f64,
    pub delta: f64,
    pub rho: f64,
    pub reps: usize,
    pub splits: Vec<String>,
    pub grid: Option<String>,
    pub tau_file: Option<PathBuf>,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn run(cfg: ExperimentConfig) -> Result<()> {
    if cfg.n == 0 || cfg.d == 0 {
        return Err(Error::InvalidParameter("need n >= 1 and d >= 1".into()));
    }
    if !(0.0 < cfg.rho && cfg.rho < 1.0) || !(0.0 < cfg.delta && cfg.delta < 1.0) {
        return Err(Error::InvalidParameter(
            "delta and rho must lie in (0,1)".into(),
        ));
    }
    match cfg.kind {
        ExperimentKind::LambdaSweep => lambda_sweep(&cfg),
        ExperimentKind::PdpHist => pdp_hist(&cfg),
        ExperimentKind::BudgetSweep => budget_sweep(&cfg),
        ExperimentKind::VaryN => vary_size(&cfg, true),
        ExperimentKind::VaryD => vary_size(&cfg, false),
    }
}

/// Noise scale and minimum regularization for the solver at budget `eps`;
/// `eps = inf` is the noiseless limit with the curvature-scale ridge kept.
fn solver_calibration(eps: f64, delta: f64) -> Result<(f64, f64)> {
    let beta = GlmLoss::Logistic.beta();
    if eps.is_infinite() {
        return Ok((0.0, 2.0 * beta));
    }
    let cal = calibrate_objpert(GlmLoss::Logistic, DpTarget::new(eps, delta)?)?;
    Ok((cal.sigma, cal.lambda_min_required))
}

fn train_split(cfg: &ExperimentConfig) -> (Dataset, Dataset) {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let all = gen_synthetic(SyntheticKind::Logistic, 2 * cfg.n, cfg.d, &mut rng);
    let train = Dataset::new(cfg.d, all.points()[..cfg.n].to_vec()).unwrap();
    let holdout = Dataset::new(cfg.d, all.points()[cfg.n..].to_vec()).unwrap();
    (train, holdout)
}

fn write_csv_rows(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn lambda_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let (sigma, lambda_req) = solver_calibration(cfg.eps, cfg.delta)?;
    let (train, holdout) = train_split(cfg);
    let inflations = [1.0, 2.0, 5.0, 10.0, 20.0];

    let mut rows = Vec::new();
    for &inflation in &inflations {
        let spec = ObjectiveSpec::new(GlmLoss::Logistic, inflation * lambda_req)?;
        // common random numbers across inflation levels
        let losses: Vec<f64> = (0..cfg.reps.max(1))
            .into_par_iter()
            .map(|rep| {
                let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ (0x5eed_0000 + rep as u64));
                let b = sample_noise(cfg.d, sigma, &mut rng);
                let model = solve(&spec, &train, &b, sigma)?;
                Ok(zero_one_loss(&model.theta_hat, &holdout))
            })
            .collect::<Result<_>>()?;
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        let var = losses.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>()
            / losses.len().max(2) as f64;
        rows.push(vec![
            inflation.to_string(),
            (inflation * lambda_req).to_string(),
            mean.to_string(),
            var.sqrt().to_string(),
            losses.len().to_string(),
        ]);
    }
    write_csv_rows(
        &cfg.out,
        &["inflation", "lambda", "mean_01_loss", "std_01_loss", "reps"],
        &rows,
    )?;
    println!("lambda sweep written to {}", cfg.out.display());
    Ok(())
}

fn train_once(
    data: &Dataset,
    eps: f64,
    delta: f64,
    lambda: f64,
    seed: u64,
) -> Result<(ObjectiveSpec, PerturbedModel)> {
    let (sigma, _) = solver_calibration(eps, delta)?;
    let spec = ObjectiveSpec::new(GlmLoss::Logistic, lambda)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let b = sample_noise(data.d(), sigma, &mut rng);
    let model = solve(&spec, data, &b, sigma)?;
    Ok((spec, model))
}

fn true_losses(spec: &ObjectiveSpec, model: &PerturbedModel, data: &Dataset) -> Result<Vec<f64>> {
    (0..data.n())
        .into_par_iter()
        .map(|i| {
            expost_pdp_glm(model, spec, data, data.point(i), Direction::Remove).map(|l| l.epsilon)
        })
        .collect()
}

#[derive(Serialize)]
struct PdpHistSummary {
    n: usize,
    d: usize,
    calibrated_eps: f64,
    lambda: f64,
    sigma2: f64,
    sigma3: f64,
    max_eps1_true: f64,
    max_eps1bar_indep: f64,
    median_eps1bar_indep: f64,
    median_eps1bar_dep: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.is_empty() {
        f64::NAN
    } else {
        sorted[sorted.len() / 2]
    }
}

/// One model released at budget `eps`, then both report flavors on top with
/// the releases budgeted at the same `eps` each (the equal-allotment setup).
fn pdp_hist(cfg: &ExperimentConfig) -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let data = gen_synthetic(SyntheticKind::Logistic, cfg.n, cfg.d, &mut rng);

    let noise = noise_from_budget(GlmLoss::Logistic, cfg.eps, cfg.eps, None, cfg.delta)?;
    let tau_method = resolve_tau_method(
        cfg.d,
        cfg.rho,
        cfg.tau_file.as_deref(),
        200_000,
        cfg.seed ^ 0x7A0,
    )?;
    let tau = objpert::release::goe_quantile(cfg.d, cfg.rho, &tau_method)?;

    // one model satisfying the stricter data-dependent lambda requirement
    let (_, lambda_req) = solver_calibration(cfg.eps, cfg.delta)?;
    let lambda = lambda_req.max(2.0 * noise.sigma3 * tau.value);
    let (spec, model) = train_once(&data, cfg.eps, cfg.delta, lambda, cfg.seed ^ 0xA1)?;
    let truths = true_losses(&spec, &model, &data)?;

    let no_noise = ReleaseNoise {
        sigma2: 0.0,
        sigma3: 0.0,
        sigma4: 0.0,
    };
    let report_i = build_report(
        &model,
        &spec,
        &data,
        ReportMode::DataIndep,
        no_noise,
        cfg.rho,
        &objpert::release::TauMethod::External(0.0),
        &mut rng,
    )?;
    let report_d = build_report(
        &model,
        &spec,
        &data,
        ReportMode::DataDep,
        noise,
        cfg.rho,
        &objpert::release::TauMethod::External(tau.value),
        &mut rng,
    )?;

    let evals_i = crate::commands::evaluate_all(&report_i, &data)?;
    let evals_d = crate::commands::evaluate_all(&report_d, &data)?;

    let mut rows = Vec::with_capacity(data.n());
    for i in 0..data.n() {
        rows.push(vec![
            i.to_string(),
            truths[i].to_string(),
            evals_i[i].eps1_bar.to_string(),
            evals_d[i].eps1_bar.to_string(),
            evals_d[i].eps2.to_string(),
            evals_d[i].eps3.to_string(),
        ]);
    }
    write_csv_rows(
        &cfg.out,
        &[
            "idx",
            "eps1_true",
            "eps1bar_indep",
            "eps1bar_dep",
            "eps2_dep",
            "eps3_dep",
        ],
        &rows,
    )?;

    let bars_i: Vec<f64> = evals_i.iter().map(|e| e.eps1_bar).collect();
    let bars_d: Vec<f64> = evals_d.iter().map(|e| e.eps1_bar).collect();
    let summary = PdpHistSummary {
        n: cfg.n,
        d: cfg.d,
        calibrated_eps: cfg.eps,
        lambda,
        sigma2: noise.sigma2,
        sigma3: noise.sigma3,
        max_eps1_true: truths.iter().cloned().fold(0.0, f64::max),
        max_eps1bar_indep: bars_i.iter().cloned().fold(0.0, f64::max),
        median_eps1bar_indep: median(&bars_i),
        median_eps1bar_dep: median(&bars_d),
    };
    let summary_path = cfg.out.with_extension("summary.json");
    serde_json::to_writer_pretty(std::fs::File::create(&summary_path)?, &summary)?;
    println!(
        "pdp histograms written to {} (summary {})",
        cfg.out.display(),
        summary_path.display()
    );
    Ok(())
}

fn budget_sweep(cfg: &ExperimentConfig) -> Result<()> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let data = gen_synthetic(SyntheticKind::Logistic, cfg.n, cfg.d, &mut rng);
    let default_splits = ["1,0,0".to_string(), "0.2,0.7,0.1".to_string(), "0.4,0.3,0.3".to_string()];
    let splits: &[String] = if cfg.splits.is_empty() {
        &default_splits
    } else {
        &cfg.splits
    };

    let mut rows = Vec::new();
    for (k, split_text) in splits.iter().enumerate() {
        let parts = parse_split(split_text, cfg.eps)?;
        let data_indep = parts[1] == 0.0 && parts[2] == 0.0;
        let seed = cfg.seed ^ ((k as u64 + 1) << 16);

        let (report, spec, model, lambda) = if data_indep {
            let (_, lambda_req) = solver_calibration(parts[0], cfg.delta)?;
            let (spec, model) = train_once(&data, parts[0], cfg.delta, lambda_req, seed)?;
            let mut build_rng = ChaCha20Rng::seed_from_u64(seed ^ 0xB);
            let report = build_report(
                &model,
                &spec,
                &data,
                ReportMode::DataIndep,
                ReleaseNoise { sigma2: 0.0, sigma3: 0.0, sigma4: 0.0 },
                cfg.rho,
                &objpert::release::TauMethod::External(0.0),
                &mut build_rng,
            )?;
            (report, spec, model, lambda_req)
        } else {
            let noise =
                noise_from_budget(GlmLoss::Logistic, parts[1], parts[2], parts.get(3).copied(), cfg.delta)?;
            let tau_method = resolve_tau_method(
                cfg.d,
                cfg.rho,
                cfg.tau_file.as_deref(),
                200_000,
                seed ^ 0x7A0,
            )?;
            let tau = objpert::release::goe_quantile(cfg.d, cfg.rho, &tau_method)?;
            let (_, lambda_req) = solver_calibration(parts[0], cfg.delta)?;
            let lambda = lambda_req.max(2.0 * noise.sigma3 * tau.value);
            let (spec, model) = train_once(&data, parts[0], cfg.delta, lambda, seed)?;
            let mut build_rng = ChaCha20Rng::seed_from_u64(seed ^ 0xB);
            let report = build_report(
                &model,
                &spec,
                &data,
                ReportMode::DataDep,
                noise,
                cfg.rho,
                &objpert::release::TauMethod::External(tau.value),
                &mut build_rng,
            )?;
            (report, spec, model, lambda)
        };

        let evals = crate::commands::evaluate_all(&report, &data)?;
        let truths = true_losses(&spec, &model, &data)?;
        let bars: Vec<f64> = evals.iter().map(|e| e.eps1_bar).collect();
        let ratios: Vec<f64> = bars
            .iter()
            .zip(&truths)
            .map(|(b, t)| if *t > 0.0 { b / t } else { f64::INFINITY })
            .collect();
        rows.push(vec![
            split_text.clone(),
            parts[0].to_string(),
            parts[1].to_string(),
            parts[2].to_string(),
            lambda.to_string(),
            report.sigma.to_string(),
            report.sigma2.to_string(),
            report.sigma3.to_string(),
            median(&bars).to_string(),
            median(&ratios).to_string(),
            truths.iter().cloned().fold(0.0f64, f64::max).to_string(),
        ]);
    }
    write_csv_rows(
        &cfg.out,
        &[
            "split",
            "eps1",
            "eps2",
            "eps3",
            "lambda",
            "sigma",
            "sigma2",
            "sigma3",
            "median_eps1bar",
            "median_ratio",
            "max_eps1_true",
        ],
        &rows,
    )?;
    println!("budget sweep written to {}", cfg.out.display());
    Ok(())
}

/// Worst-case data-independent report value at the loss-class extremes
/// (`|f'| = xi`, `f'' ||x||^2 = beta`); depends on neither n nor d.
fn worst_case_indep_bound(sigma: f64, lambda: f64, rho: f64) -> f64 {
    let xi = 1.0;
    let beta = GlmLoss::Logistic.beta();
    let term1 = if beta < lambda {
        -(-beta / lambda).ln_1p()
    } else {
        f64::INFINITY
    };
    term1 + xi * xi / (2.0 * sigma * sigma) + xi * two_sided_pad(rho) / sigma
}

fn vary_size(cfg: &ExperimentConfig, vary_n: bool) -> Result<()> {
    let default_grid = if vary_n {
        vec![100, 200, 500, 1000]
    } else {
        vec![2, 5, 10, 20, 50]
    };
    let grid: Vec<usize> = match &cfg.grid {
        None => default_grid,
        Some(text) => text
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidParameter(format!("bad grid entry `{p}`: {e}")))
            })
            .collect::<Result<_>>()?,
    };

    let (sigma, lambda_req) = solver_calibration(cfg.eps, cfg.delta)?;
    let mut rows = Vec::new();
    for (k, &value) in grid.iter().enumerate() {
        let (n, d) = if vary_n { (value, cfg.d) } else { (cfg.n, value) };
        let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed ^ ((k as u64 + 1) << 8));
        let data = gen_synthetic(SyntheticKind::Logistic, n, d, &mut rng);
        let (spec, model) = train_once(&data, cfg.eps, cfg.delta, lambda_req, cfg.seed ^ (k as u64))?;
        let truths = true_losses(&spec, &model, &data)?;
        let max_true = truths.iter().cloned().fold(0.0f64, f64::max);
        rows.push(vec![
            value.to_string(),
            max_true.to_string(),
            worst_case_indep_bound(sigma, lambda_req, cfg.rho).to_string(),
            cfg.eps.to_string(),
        ]);
    }
    write_csv_rows(
        &cfg.out,
        &[
            if vary_n { "n" } else { "d" },
            "max_eps1_true",
            "worst_bound_indep",
            "calibrated_eps",
        ],
        &rows,
    )?;
    println!(
        "{} sweep written to {}",
        if vary_n { "n" } else { "d" },
        cfg.out.display()
    );
    Ok(())
}
