//! Robust PCA with side information and features.
//!
//! The solver recovers a low-rank matrix L and a sparse corruption E from
//! observations X, optionally using a noisy side-information matrix S and
//! orthonormal feature bases U, V. Classic robust PCA, its masked variant,
//! the features-only model and low-rank representation all fall out as
//! special cases of one ADMM loop.

pub mod io;
pub mod ksvd;
pub mod metrics;
pub mod numerics;
pub mod phase;
pub mod rng;
pub mod solver;
pub mod synth;

pub mod cli;

pub use metrics::{psnr, rel_error, ssim, SsimParams};
pub use numerics::{svd, DenseMatrix, NumericsError};
pub use solver::{
    default_lambda, make_problem, solve, solve_pcp, Model, Problem, SolveReport, Solver,
    SolverConfig, SolverError,
};
pub use synth::{gen_instance, InstanceParams, SignMode, SyntheticInstance};
