//! Stability-guided adaptive acceleration for ODE-based generative samplers.
//!
//! This crate is a desk-scale laboratory for SADA-style sampling acceleration:
//! a controller watches the discrete sampling trajectory of a diffusion or
//! flow-matching model, decides per step whether the next denoiser call can be
//! skipped (step-wise), replaced by interpolation over a rolling cache
//! (multistep-wise), or partially computed through a token cache (token-wise),
//! and measures the cost/fidelity trade against an exact, unaccelerated
//! reference run.
//!
//! Everything runs against analytic oracles with known ground truth: a
//! Gaussian-mixture denoiser whose score is closed-form, and a fixed-seed
//! token-structured layered model for the token-cache protocol. No pretrained
//! weights are involved, so every claim the test suite makes is checked
//! against either a closed form or an independent numerical route.
//!
//! Module map:
//!
//! - [`numerics`] — dense-vector kernels, backward differences, backward
//!   Lagrange extrapolation, the Adams–Moulton state estimator, and Lagrange
//!   interpolation over cached nodes.
//! - [`schedule`] — noise schedules (`vp-linear`, `vp-cosine`, `flow-linear`),
//!   timestep grids, trajectory gradients for the probability-flow ODE and
//!   flow matching, and data prediction.
//! - [`denoiser`] — the analytic Gaussian-mixture oracle, the token-structured
//!   layered model, and evaluation accounting.
//! - [`solver`] — reference samplers: first-order Euler for both gradient
//!   conventions and a second-order data-prediction multistep update.
//! - [`control`] — the stability criterion, sparsity-mode dispatch, the
//!   step-wise / multistep-wise / token-wise approximation machinery, and the
//!   third-difference baseline policy used for comparison.
//! - [`harness`] — run configuration, experiments, metrics, and CSV/JSON
//!   emission.
//!
//! The `examples/` directory is the front door: each example is a runnable
//! demonstration of one capability. The `sada` binary exposes the same
//! experiment drivers behind a small CLI (`run`, `convergence`, `compare`,
//! `report`).

pub mod control;
pub mod denoiser;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod schedule;
pub mod solver;

pub use error::{Error, Result};
pub use numerics::Vector;
