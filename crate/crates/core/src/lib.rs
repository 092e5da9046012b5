//! Adaptive Bayesian particle-filter tomography for single qubits.
//!
//! The pipeline: an empirical Gaussian prior from a round of Pauli
//! measurements ([`prior`]), a weighted particle posterior updated with the
//! binomial likelihood ([`filter`]), Liu–West resampling that keeps every
//! particle a valid state ([`resample`]), and an outer loop that rotates the
//! measurement triad onto the running estimate ([`adaptive`]). [`sgqt`] holds
//! a self-guided SPSA baseline and [`harness`] the batch experiment driver.

// `!(x > 0.0)` guards are meant to reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adaptive;
pub mod backend;
pub mod bloch;
pub mod error;
pub mod filter;
pub mod harness;
pub mod prior;
pub mod resample;
pub mod sgqt;

pub use adaptive::{
    run_adaptive, run_static, IterationRecord, MeasurementTriad, RunConfig, Schedule,
};
pub use backend::{MeasurementBackend, OutcomeCounts, ReplayBackend, SimulatedBackend};
pub use bloch::{BlochVector, DensityMatrix};
pub use error::{QstError, Result};
pub use filter::ParticleCloud;
