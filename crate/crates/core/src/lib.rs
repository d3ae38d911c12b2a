//! Maximum-likelihood quantum state tomography by stochastic mirror descent
//! with the Burg entropy (`h(rho) = -ln det rho`).
//!
//! - [`hermitian`]: dense Hermitian matrices and spectral primitives.
//! - [`model`]: density matrices, shot datasets, the negative log-likelihood.
//! - [`smd`]: the stochastic solver, its exact mirror step and step-size schedule.
//! - [`baselines`]: R-rho-R and full-batch mirror descent.
//! - [`synthetic`]: W-state Pauli measurement data and the dataset file format.
//! - [`bench`]: experiment runner and CSV metrics.

pub mod baselines;
pub mod bench;
pub mod error;
pub mod hermitian;
pub mod model;
pub mod smd;
pub mod synthetic;

pub use error::{Error, Result};
pub use hermitian::{
    eig_hermitian, from_spectrum, hermitize, trace_product, HermitianMatrix, SpectralDecomposition,
};
pub use model::{
    fidelity_pure, nll, nll_gradient, sample_loss, sample_loss_gradient, trace_distance,
    DensityMatrix, MeasurementOperator, ShotDataset,
};
pub use smd::{
    log_barrier_simplex_root, mirror_step, run, step_size_for_horizon, theoretical_error_bound,
    Iterate, SmdBurg, SolverConfig, DEFAULT_NEWTON_EPS,
};
