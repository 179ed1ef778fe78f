//! Transfer-matrix simulation of anti-symmetrically coupled Mach-Zehnder
//! interferometer chains, with the estimation-theory tools used to quantify
//! their phase sensitivity.
//!
//! * [`su2`]: 2×2 complex algebra and elementary optical operators.
//! * [`chain`]: chain wiring, propagation, fringe scans and calibration.
//! * [`time_domain`]: AOM-driven time traces with event schedules.
//! * [`metrology`]: Fisher information, Cramér-Rao bounds, MLE, harmonics.

pub mod chain;
pub mod error;
pub mod metrology;
pub mod rng;
pub mod spectrum;
pub mod su2;
pub mod time_domain;

pub use error::{CbwError, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
