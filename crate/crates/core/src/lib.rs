//! Designed decoherence of a microwave-driven hyperfine qubit.
//!
//! Weak resonance light admitted during the microwave drive scatters off the
//! ion and produces calibrated transverse (γ) and longitudinal (Γ) relaxation.
//! This crate provides
//!
//! * [`model`]: closed-form scattering rates, effective rates and
//!   saturation levels,
//! * [`dynamics`]: four-level, adiabatic and effective two-level integrators,
//! * [`protocol`]: Monte Carlo of the prepare / drive / probe sequence,
//! * [`estimation`]: nutation fitting, rate inversion and inverse design,
//! * [`config`] and [`cli`]: the `decoherence` command-line tool.

pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod model;
pub mod protocol;
pub mod units;

pub use error::{Error, Result};
