//! Co-design toolkit for a coaxial octorotor multicopter.
//!
//! The crate couples plant sizing and flight-control tuning in one nested
//! optimization:
//!
//! * [`sizing`] — scaling laws mapping a six-variable normalized design vector
//!   (motor size, rotor radius, blade pitch, battery capacity, arm length,
//!   arm wall) onto a full vehicle parameter set;
//! * [`dynamics`] — nonlinear six-degree-of-freedom rigid-body simulation with
//!   per-rotor motor electro-mechanics, first-order thermal models, energy
//!   bookkeeping, and single-rotor fault injection;
//! * [`control`] — the fixed-structure cascaded flight controller (16 gains)
//!   and the pseudo-inverse thrust mixer;
//! * [`linear`] — trim, finite-difference linearization, state-space algebra,
//!   and a Hamiltonian-bisection H∞ norm;
//! * [`htune`] — multi-model fixed-structure H∞ gain synthesis covering the
//!   nominal plant and all eight single-rotor-failure plants;
//! * [`designopt`] — the outer surrogate-assisted global search over the
//!   plant design vector, with the gain tuner nested inside each candidate
//!   evaluation;
//! * [`cli`] — the command implementations behind the `size`, `tune`,
//!   `simulate`, and `codesign` subcommands.
//!
//! All numerical searches are deterministic for a fixed seed.

pub mod cli;
pub mod config;
pub mod control;
pub mod designopt;
pub mod dynamics;
pub mod error;
pub mod htune;
pub mod linear;
pub mod sizing;

pub use error::{Error, Result};
