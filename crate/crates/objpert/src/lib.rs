//! Objective perturbation with exact per-instance privacy accounting.
//!
//! The crate trains ridge-regularized generalized linear models through the
//! objective-perturbation mechanism, computes the exact ex-post per-instance
//! privacy loss of releasing the fitted parameters, and builds a privately
//! publishable report function that any individual can evaluate on her own
//! data to bound that loss.
//!
//! Layout:
//! - [`glm`]: losses, datasets, the objective calculus;
//! - [`solver`]: noise sampling, Newton solving, DP calibration;
//! - [`accounting`]: exact ex-post losses, Gaussian-mechanism losses,
//!   data-independent bounds;
//! - [`release`]: GOE-noised Hessian, gradient and smallest-eigenvalue
//!   releases with their overhead losses;
//! - [`report`]: the publishable report in data-independent, data-dependent
//!   and adaptive modes;
//! - [`oracle`]: independent density-ratio and coverage verifiers that pin
//!   every formula above.

pub mod accounting;
pub mod error;
pub mod glm;
pub mod oracle;
pub mod release;
pub mod report;
pub mod solver;
pub mod stat;
pub mod synth;

pub use error::{Error, Result};
