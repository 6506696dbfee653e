//! Density deconvolution toolkit.
//!
//! Observations x are formed as x = a + b (sum mode) or x = a * b (product
//! mode) from a signal b and noise a with known distribution. This crate
//! estimates the probability density of b by three methods and scores them
//! by KL divergence against ground truth:
//!
//! - Bayesian inference with a known (Gamma) signal model, sampled by
//!   Metropolis-Hastings ([`bayes_known`]);
//! - Bayesian inference with a truncated Gaussian mixture, sampled by a
//!   blocked Gibbs sweep ([`bayes_gmm`]);
//! - maximum-likelihood training of a normalizing flow against the
//!   convolved likelihood ([`flow`], [`train`]).
//!
//! Product-mode computations run in log space throughout: log x = log a +
//! log b turns the Mellin convolution into an ordinary one.

pub mod autodiff;
pub mod bayes_gmm;
pub mod bayes_known;
pub mod dist;
pub mod error;
pub mod eval;
pub mod flow;
pub mod likelihood;
pub mod math;
pub mod mcmc;
pub mod quad;
pub mod rng;
pub mod train;

pub use dist::{dirichlet_sample, MomentSource, NoiseModel, PsiB, ScalarDist};
pub use error::{DeconvError, Result};
pub use quad::{DataModel, QuadGrid};
