//! Spontaneous photon currents in a ring of lossy cavities that share a
//! common ensemble of two-level emitters.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: parameter validation and the ring topology.
//! - [`meanfield`]: mean-field equations of motion, time integration and
//!   evolution to a steady state ([`ode`] holds the adaptive stepper).
//! - [`analytic`]: closed-form steady states, critical couplings and the
//!   critical detuning.
//! - [`stability`]: linearised fluctuation matrix and its spectrum.
//! - [`currents`]: inter-cavity, emitter-cavity and loss currents with the
//!   node balance audit.
//! - [`fluctuations`]: Gaussian (Holstein-Primakoff) fluctuations and steady
//!   photon-number variances.
//! - [`sweep`]: parallel parameter grids and their CSV/JSON export.
//!
//! Internally every frequency is measured in units of the emitter frequency
//! `Omega` and every time in units of `1/Omega`.

pub mod analytic;
pub mod currents;
mod error;
pub mod fluctuations;
pub mod meanfield;
pub mod model;
pub mod ode;
pub mod stability;
pub mod sweep;

pub use analytic::{Branch, Phase, Provenance, StabilityTag, SteadySolution};
pub use error::{Error, Result};
pub use meanfield::MeanFieldState;
pub use model::{DetuningLadder, LadderSystem, SystemParams, ValidatedParams};
