//! Within-class variability collapse (NC1) of neural-network kernels on Gaussian mixtures.
//!
//! The crate covers dataset generation ([`data`]), closed-form NNGP and NTK kernels
//! ([`kernels`]), NC1 from Gram matrices and features ([`nc1`]), leading-order expected-NC1
//! predictors with Monte Carlo checks ([`predict`]), the adaptive-kernel Equations of State
//! solver ([`eos`]), a finite-width network baseline ([`fcn`]) and experiment orchestration
//! ([`sweep`], [`verify`], [`output`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod eos;
pub mod error;
pub mod fcn;
pub mod kernels;
pub mod nc1;
pub mod output;
pub mod predict;
pub mod rng;
pub mod sweep;
pub mod verify;

pub use data::{make_d1, make_d2, make_imbalanced, sample_gaussian_mixture, ClassSpec, Dataset, MixtureSpec};
pub use error::{Error, Result};
pub use kernels::{assemble_gram, eval_kernel, Gram, HyperParams, KernelKind};
pub use nc1::{nc1_of_features, nc1_of_gram, relative_nc1, Nc1Report};
pub use output::emit_outputs;
pub use sweep::{run_sweep, Method, SweepConfig, SweepResult};
pub use verify::{run_verify, VerifyReport};
