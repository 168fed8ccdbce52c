//! Three-block Gibbs samplers for the Bayesian fused lasso, Bayesian group
//! lasso and Bayesian sparse group lasso.
//!
//! Besides the samplers the crate exposes the drift/minorization machinery
//! that certifies geometric ergodicity of each chain (drift functions, drift
//! rates, drift constants, small-set radii and minorization constants), the
//! penalized-regression solvers that produce the default starting values,
//! MCMC output analysis (batch means, MCSE, ESS) and a verification harness
//! (joint-distribution tests, prior checks and a quadrature posterior oracle).

pub mod distributions;
pub mod ergodicity;
mod error;
pub mod gibbs;
pub mod model;
pub mod output;
pub mod quadrature;
pub mod solvers;
pub mod verification;

pub use error::{Error, Result};
pub use model::{Dataset, GroupStructure, Hyperparameters, ModelKind};
