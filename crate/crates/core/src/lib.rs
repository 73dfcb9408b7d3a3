//! Gaussian-process regression with covariance functions induced by
//! infinitely wide deep networks (NNGP), plus GP-based solvers for linear
//! and linearized PDEs.
//!
//! The crate is organised bottom-up:
//!
//! * [`sampling`]: Halton, Latin hypercube and boundary point designs.
//! * [`kernels`]: the layer-iterated ReLU/erf kernels, the single-layer
//!   arcsine kernel and the SE/Matern baselines.
//! * [`jets`]: kernel values bundled with the mixed partial derivatives needed
//!   to apply differential operators to either argument.
//! * [`quadrature`]: Gaussian quadrature rules and a numerical evaluation of the
//!   layer transition for arbitrary activations.
//! * [`gp`]: block covariance assembly, posterior, marginal likelihood and
//!   multi-restart conjugate-gradient training.
//! * [`pde`]: the Poisson and Burgers solvers and their reference solutions.

pub mod error;
pub mod gp;
pub mod jets;
pub mod kernels;
pub mod linalg;
pub mod pde;
pub mod quadrature;
pub mod sampling;

pub use error::{Error, Result};
pub use gp::{
    posterior, train, ObservationBlock, Observations, OperatorField, Posterior, QueryBlock,
    TrainOptions, TrainResult,
};
pub use jets::{apply_operator_pair, KernelJet, LinearOp};
pub use kernels::{HyperParams, KernelFamily, KernelSpec};
