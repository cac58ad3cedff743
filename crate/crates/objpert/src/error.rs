use thiserror::Error;

/// Errors produced by the solver, accounting, release and report layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("solver did not converge within {max_iter} iterations (residual {residual:.3e})")]
    NonConvergence { max_iter: usize, residual: f64 },

    #[error("loss has unbounded gradient norm; worst-case DP calibration is undefined")]
    UnboundedGradient,

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("per-point Hessian has a negative eigenvalue ({0:.3e})")]
    NonPsdHessian(f64),

    #[error("log argument {0:.6e} is not positive; removal of a non-member or numerical breakdown")]
    LogDomain(f64),

    #[error("data-independent bound undefined: per-point curvature {eig:.6e} >= lambda {lambda:.6e}")]
    BoundDomain { eig: f64, lambda: f64 },

    #[error("privacy loss is infinite (zero noise scale with nonzero sensitivity)")]
    InfinitePrivacyLoss,

    #[error("removal target is not a member of the dataset")]
    NotInDataset,

    #[error("Monte-Carlo tail too deep: need rho/2 >= 10/N, got rho={rho:.3e} with N={samples}")]
    MonteCarloTailTooDeep { rho: f64, samples: usize },

    #[error("lambda {lambda:.6e} below the report requirement {required:.6e}")]
    LambdaTooSmall { lambda: f64, required: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
