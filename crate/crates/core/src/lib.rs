//! Quantum reinforcement learning eigensolver for a two-level agent, with
//! exact non-Markovian amplitude damping and bound-state spectral analysis.
//!
//! Units: the agent frequency `ω0` is the unit of frequency and `1/ω0` the
//! unit of time throughout.
//!
//! Layout:
//! - [`quantum`]: 2×2 states, unitaries, rotation gates and the fidelity metric.
//! - [`spectral`]: Ohmic-family spectral density, memory kernel, bound-state
//!   pole, residue and band density.
//! - [`dynamics`]: the Volterra equation for the decoherence function `x(t)`,
//!   the Born–Markov limit and the exact amplitude-damping channel.
//! - [`protocol`]: one QRL episode.
//! - [`experiments`]: Monte Carlo aggregation and parameter sweeps.
//! - [`io`]: run configuration, CSV and manifest output.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod io;
pub mod protocol;
pub mod quadrature;
pub mod quantum;
pub mod spectral;

pub use error::{Error, Result};
