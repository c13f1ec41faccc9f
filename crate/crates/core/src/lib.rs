//! Kernel ridge regression with plain Nyström subsampling.
//!
//! The crate covers the full pipeline used to study learning rates in the
//! misspecified regime: Mercer kernels (including a designed kernel with an
//! explicit Fourier eigenbasis on `[0, 1]`), full-data and Nyström KRR,
//! effective dimensions and the a-priori parameter `λ₀` solving
//! `N(λ) = λn`, synthetic data under general source conditions, Monte-Carlo
//! checks of the operator concentration bounds, and config-driven sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod experiments;
pub mod kernels;
pub mod krr;
pub mod linalg;
pub mod nystrom;
pub mod parallel;
pub mod rng;
pub mod spectral;
pub mod synthetic;

pub use error::{Error, Result};
pub use experiments::ExperimentConfig;
pub use kernels::{DecaySpec, KernelSpec};
pub use krr::{fit_krr, KernelExpansion, KrrModel};
pub use linalg::OpCount;
pub use nystrom::{fit_nystrom, subsample_plain, subsample_size, NystromModel, SizeRuleParams};
pub use spectral::{IndexFunction, SpectralProfile};
pub use synthetic::{Dataset, NoiseSpec, TargetSpec};
