//! Centralized numerical tolerances.
//!
//! Every comparison in the crate routes through one of these constants so the
//! acceptance thresholds live in exactly one place. Loosening any of them to
//! make a check pass is a bug, not a fix.

/// Absolute tolerance for exact (enumeration vs linear algebra) identities.
pub const EXACT_ABS: f64 = 1e-10;

/// Relative tolerance for exact identities with large magnitudes.
pub const EXACT_REL: f64 = 1e-8;

/// Detailed-balance residual allowed when a model claims reversibility.
pub const DETAILED_BALANCE: f64 = 1e-12;

/// Spectral abscissa below this is transient; within it of zero is recurrent.
pub const TRANSIENCE: f64 = 1e-10;

/// Kernel symmetry residual for reversible models.
pub const KERNEL_SYMMETRY: f64 = 1e-10;

/// Eigenvalues of a covariance may undershoot zero by at most this much.
pub const PSD: f64 = 1e-10;

/// Agreement required between the hitting kernel and its resolvent limit.
pub const KILLED_LIMIT: f64 = 1e-6;

/// Spectral radius of a load matrix must stay below `1 - SPECTRAL_MARGIN`.
pub const SPECTRAL_MARGIN: f64 = 1e-6;

/// Geometric series are truncated once the tail bound drops below this.
pub const SERIES_TAIL: f64 = 1e-13;

/// Monte Carlo checks pass within this many standard errors.
pub const MC_SIGMA: f64 = 3.0;

/// Pass test for exact identities: absolute or relative agreement.
pub fn exact_ok(lhs: f64, rhs: f64) -> bool {
    let abs = (lhs - rhs).abs();
    let scale = lhs.abs().max(rhs.abs());
    abs <= EXACT_ABS || abs <= EXACT_REL * scale
}
