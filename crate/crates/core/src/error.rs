use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the spectral routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("site index {index} out of range for a lattice with {len} sites")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("{0}")]
    Domain(String),

    #[error("energy {z} lies on the periodic spectrum (momentum index q = {q}, E = {energy})")]
    Pole { z: Complex64, q: usize, energy: Complex64 },

    #[error("Bloch matrix is degenerate at momentum indices {0:?}")]
    DegenerateBloch(Vec<usize>),

    #[error("dressed resolvent has a pole at z = {z}: |1 - eps G(s,s)| = {denominator:.3e}")]
    DressedPole { z: Complex64, denominator: f64 },

    #[error("vanishing normalization denominator: {0}")]
    DegenerateNormalization(String),

    #[error("state {index} has vanishing biorthogonal norm |<L|R>| = {norm:.3e} (exceptional point)")]
    ExceptionalPoint { index: usize, norm: f64 },

    #[error("root finding failed for {} of {total} roots: {details}", failed.len())]
    RootFinding {
        failed: Vec<usize>,
        total: usize,
        details: String,
    },

    #[error("eigenvalue {energy} collides with the periodic spectrum; no residue could be extracted")]
    Collision { energy: Complex64 },

    #[error("eigenstate residual {residual:.3e} exceeds tolerance {tolerance:.1e} at E = {energy}")]
    Residual {
        energy: Complex64,
        residual: f64,
        tolerance: f64,
    },

    #[error("QR iteration did not converge after {iterations} iterations ({remaining} eigenvalues unresolved)")]
    NoConvergence { iterations: usize, remaining: usize },

    #[error("matrix is singular")]
    Singular,

    #[error("spectra do not match: {0}")]
    Mismatch(String),

    #[error("{0}")]
    Identification(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
