//! Adaptive minimax estimation of nonparametric functionals.
//!
//! The crate implements a second-order U-statistic estimator built from
//! wavelet projection kernels, a Lepski-type rule that selects the resolution
//! from data, sup-norm adaptive density and regression estimators used as
//! nuisance inputs, three concrete functional-estimation pipelines (treatment
//! effect, missing-data mean, quadratic/variance functionals), and a
//! lower-bound laboratory for two-hypothesis prior constructions with exact
//! chi-square divergence computations on discretized models.
//!
//! Start with the `examples/` directory: each example exercises one major
//! capability end to end. The `afe` binary exposes the same functionality as
//! subcommands (`estimate`, `simulate`, `calibrate`, `lowerbound`,
//! `wavelet-check`).

// tensor accumulation code indexes several parallel per-axis buffers at once
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod function;
pub mod functionals;
pub mod lepski;
pub mod lowerbound;
pub mod numeric;
pub mod sim;
pub mod supnorm;
pub mod ustat;
pub mod wavelet;

pub use error::{Error, Result};
pub use function::FunctionRep;
pub use ustat::{Dataset, Observation};
pub use wavelet::{FamilyKind, FamilySpec, MultiresIndex, WaveletFamily};
