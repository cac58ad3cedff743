//! `pdp`: train privately, account per-instance losses, publish reports.

mod commands;
mod experiments;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use objpert::report::ReportMode;
use objpert::synth::SyntheticKind;
use objpert::Error;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERIC: u8 = 2;
const EXIT_PRECONDITION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "pdp",
    about = "Objective perturbation with publishable per-instance privacy reports",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Linear,
    Logistic,
}

impl From<KindArg> for SyntheticKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Linear => SyntheticKind::Linear,
            KindArg::Logistic => SyntheticKind::Logistic,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Logistic,
    Squared,
}

impl From<LossArg> for objpert::glm::GlmLoss {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Logistic => objpert::glm::GlmLoss::Logistic,
            LossArg::Squared => objpert::glm::GlmLoss::Squared,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    DataIndep,
    DataDep,
    Adaptive,
}

impl From<ModeArg> for ReportMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::DataIndep => ReportMode::DataIndep,
            ModeArg::DataDep => ReportMode::DataDep,
            ModeArg::Adaptive => ReportMode::Adaptive,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV.
    Gen {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Calibrate, perturb and solve; write the model JSON.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "logistic")]
        loss: LossArg,
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 1e-6)]
        delta: f64,
        /// Multiplier on the minimum DP-required regularization.
        #[arg(long, default_value_t = 1.0)]
        inflate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Skip the ingest normalization (feature rescaling, label clipping).
        #[arg(long)]
        no_normalize: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a privacy report and evaluate it for every dataset member.
    Report {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "data-indep")]
        mode: ModeArg,
        /// Total privacy budget, divided by --split.
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        /// Budget weights eps1,eps2,eps3[,eps4]; eps1 is informational (the
        /// model is already trained), the rest calibrate the release noise.
        #[arg(long)]
        split: Option<String>,
        /// Release noise scales, overriding --split calibration.
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long)]
        sigma3: Option<f64>,
        #[arg(long)]
        sigma4: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        delta: f64,
        #[arg(long, default_value_t = 1e-6)]
        rho: f64,
        /// JSON table of GOE largest-eigenvalue quantiles.
        #[arg(long)]
        tau_file: Option<PathBuf>,
        #[arg(long, default_value_t = 200_000)]
        tau_mc_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Per-individual evaluation CSV.
        #[arg(long)]
        evals: PathBuf,
        /// Add the true loss column (reads raw data; output is not publishable).
        #[arg(long)]
        with_ground_truth: bool,
    },
    /// Evaluate an existing report on query points (no raw dataset needed).
    Eval {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a predefined experiment and emit plot-ready CSV.
    Experiment {
        #[arg(long)]
        kind: experiments::ExperimentKind,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 20)]
        d: usize,
        /// Privacy budget; `inf` runs the noiseless limit.
        #[arg(long, default_value_t = 1.0)]
        eps: f64,
        #[arg(long, default_value_t = 1e-6)]
        delta: f64,
        #[arg(long, default_value_t = 1e-6)]
        rho: f64,
        #[arg(long, default_value_t = 8)]
        reps: usize,
        /// Budget split(s) for the budget sweep, repeatable.
        #[arg(long)]
        split: Vec<String>,
        /// Grid of n or d values for the vary experiments.
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        tau_file: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the independent verification suites.
    Oracle {
        /// One of: logodds, det, coverage, all.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reconstruct a counting query from its published ex-post loss.
    Demo {
        #[arg(long, default_value_t = 7)]
        q: u64,
        #[arg(long, default_value_t = 2.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::NonConvergence { .. }
        | Error::NotPositiveDefinite
        | Error::NonPsdHessian(_)
        | Error::LogDomain(_)
        | Error::InfinitePrivacyLoss
        | Error::BoundDomain { .. }
        | Error::MonteCarloTailTooDeep { .. } => EXIT_NUMERIC,
        Error::DimensionMismatch { .. }
        | Error::UnboundedGradient
        | Error::LambdaTooSmall { .. }
        | Error::NotInDataset
        | Error::InvalidParameter(_)
        | Error::Csv(_)
        | Error::Io(_)
        | Error::Json(_) => EXIT_PRECONDITION,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // help/version are not usage errors
            use clap::error::ErrorKind;
            let _ = err.print();
            return match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_USAGE),
            };
        }
    };

    let result = match cli.command {
        Command::Gen { kind, n, d, seed, out } => commands::gen(kind.into(), n, d, seed, &out),
        Command::Train {
            data,
            loss,
            eps,
            delta,
            inflate,
            seed,
            no_normalize,
            out,
        } => commands::train(&data, loss.into(), eps, delta, inflate, seed, no_normalize, &out),
        Command::Report {
            model,
            data,
            mode,
            eps,
            split,
            sigma2,
            sigma3,
            sigma4,
            delta,
            rho,
            tau_file,
            tau_mc_samples,
            seed,
            out,
            evals,
            with_ground_truth,
        } => commands::report(commands::ReportArgs {
            model: &model,
            data: &data,
            mode: mode.into(),
            eps,
            split: split.as_deref(),
            sigma2,
            sigma3,
            sigma4,
            delta,
            rho,
            tau_file: tau_file.as_deref(),
            tau_mc_samples,
            seed,
            out: &out,
            evals: &evals,
            with_ground_truth,
        }),
        Command::Eval { report, data, out } => commands::eval_points(&report, &data, &out),
        Command::Experiment {
            kind,
            n,
            d,
            eps,
            delta,
            rho,
            reps,
            split,
            grid,
            tau_file,
            seed,
            out,
        } => experiments::run(experiments::ExperimentConfig {
            kind,
            n,
            d,
            eps,
            delta,
            rho,
            reps,
            splits: split,
            grid,
            tau_file,
            seed,
            out,
        }),
        Command::Oracle { suite, seed } => {
            if !commands::ORACLE_SUITES.contains(&suite.as_str()) {
                eprintln!("error: unknown suite `{suite}` (expected logodds, det, coverage or all)");
                return ExitCode::from(EXIT_USAGE);
            }
            return match commands::oracle(&suite, seed) {
                Ok(true) => ExitCode::SUCCESS,
                Ok(false) => ExitCode::from(EXIT_NUMERIC),
                Err(err) => {
                    eprintln!("error: {err}");
                    ExitCode::from(exit_code_for(&err))
                }
            };
        }
        Command::Demo { q, sigma, seed, trials } => commands::demo(q, sigma, seed, trials),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
