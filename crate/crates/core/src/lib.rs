//! Monte Carlo and quasi-Monte Carlo estimation of fractional derivatives,
//! plus a physics-informed collocation solver for fractional PDEs on
//! irregular domains.
//!
//! The crate is organised bottom-up:
//!
//! * [`gamma`] — special functions (Lanczos Γ, Caputo series helpers).
//! * [`qmc`] — deterministic, splittable uniform / low-discrepancy streams.
//! * [`sampler`] — the Grünwald-Letnikov jump law and node-set draws.
//! * [`estimator`] — one-sided, Riesz and Caputo fractional-derivative
//!   estimators built from sampled node sets.
//! * [`geometry`] — irregular domains (disk, ball, heart) with per-point
//!   frozen axis bounds and rejection sampling.
//! * [`nn`] — a small dense tanh network with analytic backprop.
//! * [`tape`] — scalar reverse-mode autodiff used for cross-checks.
//! * [`optimize`] — Adam and L-BFGS (strong-Wolfe line search).
//! * [`solver`] — residual assembly, loss, and the training loop.
//! * [`problems`] — the benchmark problem definitions.
//! * [`config`] — TOML run configuration.
//! * [`report`] — CSV/JSON artifact writers.

pub mod config;
pub mod estimator;
pub mod gamma;
pub mod geometry;
pub mod nn;
pub mod optimize;
pub mod problems;
pub mod qmc;
pub mod report;
pub mod sampler;
pub mod solver;
pub mod tape;
