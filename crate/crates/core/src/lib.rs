//! Core algorithms for uplink power allocation in cell-free massive MIMO.
//!
//! The crate covers the full numerical pipeline:
//!
//! * [`channel`] — random network drops: wrapped-around geometry, three-slope
//!   path loss, log-normal shadowing, pilot assignment, and the MMSE channel
//!   estimation quality statistics everything downstream consumes.
//! * [`solver`] — the proportional-fairness spectral-efficiency maximizer:
//!   closed-form max-SINR receiver filters alternated with gradient-projection
//!   power updates under Armijo backtracking.
//! * [`rdn`] — the PowerRDN residual dense network that learns the solver's
//!   power labels, with an exact analytic backward pass and Adam training.
//! * [`dataset`] — labeled-sample assembly, deterministic splits, and input
//!   normalization.
//! * [`metrics`] — net spectral efficiency, Jain's fairness index, and the
//!   summary statistics used for solver/network comparisons.
//!
//! Everything here is `no_std` + `alloc`: pure, deterministic computation.
//! File formats, timing, parallel generation, and the CLI live in the
//! companion `cfpf` crate.

#![cfg_attr(not(test), no_std)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod channel;
pub mod dataset;
pub mod mat;
pub mod metrics;
pub mod rdn;
pub mod seed;
pub mod solver;

pub use mat::Mat;
