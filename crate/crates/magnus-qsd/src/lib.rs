//! Trajectory-based simulator for Markovian open quantum systems.
//!
//! The Lindblad master equation is unraveled into quantum-state-diffusion
//! trajectories driven by Wiener noise, and each trajectory is propagated
//! with exponential integrators built from a truncated stochastic Magnus
//! series (orders I–IV). A dense vectorized-superoperator solver provides
//! exact reference dynamics, a statevector emulator mirrors the same
//! stepping through a variational-circuit layer, and the CLI packages
//! benchmark models (damped transverse-field Ising chain, a five-level
//! exciton-transfer complex, a radical-pair magnetoreception model) with
//! ensemble statistics, convergence studies, and SVG reporting.

pub mod cli;
pub mod config;
pub mod error;
pub mod matrix;
pub mod expm;
pub mod pauli;
pub mod plot;
pub mod models;
pub mod ensemble;
pub mod exact;
pub mod magnus;
pub mod stats;
pub mod vqs;
pub mod wiener;

pub use error::{QsdError, Result};
