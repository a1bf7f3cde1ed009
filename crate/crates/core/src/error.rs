//! Crate-wide error type.

use thiserror::Error;

/// Anything that can go wrong while building or solving a model.
#[derive(Debug, Error)]
pub enum Error {
    /// Physical input outside the supported domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Impossible cell/beam geometry (e.g. no dark region left).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Mismatched dimensions between schemes, channels, or matrices.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Linear system is singular beyond the expected trace degeneracies.
    #[error("singular system: {0}")]
    Singular(String),

    /// Drift matrix has an eigenvalue with positive real part.
    #[error("unstable drift: {0}")]
    Stability(String),

    /// Fluctuation solve hit a (near-)resonant sideband.
    #[error("resonant sideband at ω = {omega:.6e} rad/s")]
    Resonance { omega: f64 },

    /// A structural model check failed (e.g. diffusion clipping too large).
    #[error("model consistency: {0}")]
    ModelConsistency(String),

    /// Degenerate input for which the requested quantity is undefined.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// Requested resolution or size exceeds hard limits.
    #[error("resource limit: {0}")]
    Resource(String),

    /// Configuration parse or validation failure.
    #[error("config error: {0}")]
    Config(String),

    /// Curve fit did not converge or is undefined for the data.
    #[error("fit error: {0}")]
    Fit(String),

    /// File I/O failure.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
