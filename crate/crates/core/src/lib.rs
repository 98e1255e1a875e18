//! Sampling from soft truncated multivariate normal distributions.
//!
//! A soft tMVN replaces the hard indicator of a polyhedral cone
//! `{theta : s_i a_i^T theta >= 0}` with scaled logistic sigmoids,
//! giving a log-concave density supported on all of `R^d`. This crate provides
//! a Polya-Gamma blocked Gibbs sampler for it with structured Gaussian fast
//! paths, exact reference samplers for the hard tMVN, comparison metrics,
//! scenario generators and a monotone single-index regression fitter.

pub mod batch;
pub mod constraints;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod kernel;
pub mod msim;
pub mod polya_gamma;
pub mod reference;
pub mod rng;
pub mod scenarios;
pub mod special;
pub mod structured;

pub use batch::{ChainSpec, Init, SampleBatch};
pub use constraints::{sigmoid_eta, ConstraintRow, ConstraintSet, Sign, SoftTmvnParams};
pub use error::{Error, Result};
pub use structured::CovStructure;
