//! Squeezed-light generation in an N-channel laser array inside a wall-coated
//! alkali vapor cell.
//!
//! The crate models each illuminated channel as a local double-Λ atom-light
//! interaction region coupled, through atomic motion, to the shared dark
//! region of the cell, which acts as a long-lived reservoir of ground-state
//! coherence. It provides:
//!
//! - steady states of the coupled channel + reservoir master equations
//!   ([`steady`]),
//! - linearized quantum-fluctuation transport through the cell and quadrature
//!   noise spectra of the generated vacuum field — squeezing level, angle,
//!   purity, combined-beam noise ([`noise`], [`model`]),
//! - time-domain synchronization and recovery dynamics under pulsed channel
//!   schedules ([`dynamics`]),
//! - closed-form three-level results, self-rotation estimates, and far-field
//!   beam-lattice patterns ([`analytics`]),
//! - a batch CLI with scenario presets, a sweep engine, and CSV/JSON/SVG
//!   output ([`config`], [`scenario`], [`sweep`], [`output`], [`chart`]).
//!
//! Conventions used throughout: all rates and detunings are angular (rad/s);
//! quantities quoted in MHz are converted by 2π once at the config boundary;
//! density matrices are row-major `ndarray` arrays with basis order
//! (|x⟩, |y⟩, |3⟩, |4⟩[, |t⟩]) for the linear-polarization schemes and
//! (|1⟩, |2⟩, |3⟩) for the circular-basis Λ scheme.

pub mod analytics;
pub mod atom;
pub mod dynamics;
pub mod error;
pub mod model;
pub mod noise;
pub mod steady;
pub mod linalg;
pub mod physics;

pub use error::{Error, Result};
