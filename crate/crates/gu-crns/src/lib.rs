//! Finite element solver for a coupled cell-density / chemical-gradient /
//! incompressible-flow system on rectangular 2D domains.
//!
//! The time discretization is a projection method of Gauge-Uzawa type: each
//! step solves one coupled linear system for the cell density, the chemical
//! gradient and an intermediate velocity, then recovers a divergence-free
//! composite velocity and the pressure from a gauge variable and an Uzawa
//! accumulator. First-order (backward Euler) and second-order (BDF2 with
//! extrapolation) variants are provided. The spatial discretization uses
//! continuous P1 elements for scalars and the MINI (P1-bubble / P1) pair for
//! velocity and pressure.
//!
//! Module map:
//! - [`mesh`]: structured triangulations of axis-aligned rectangles
//! - [`quadrature`]: symmetric triangle rules with declared exactness
//! - [`spaces`]: discrete spaces, fields, L2 projection, boundary conditions
//! - [`sparse`]: CSR matrices, sparse LU, CG and GMRES
//! - [`assembly`]: bilinear forms and the coupled step-1 system
//! - [`scheme`]: the two time-stepping drivers, energy and invariants
//! - [`verification`]: manufactured solutions, error norms, rate sweeps
//! - [`cli`]: run configuration, experiment drivers, CSV/VTK output

pub mod assembly;
pub mod cli;
pub mod mesh;
pub mod quadrature;
pub mod scheme;
pub mod spaces;
pub mod sparse;
pub mod verification;

use std::fmt;

/// Crate-wide error type.
#[derive(Debug)]
pub enum Error {
    /// A precondition on user-supplied arguments was violated.
    InvalidArgument(String),
    /// A linear solve failed or its verified residual was out of tolerance.
    SolverFailure {
        what: String,
        iterations: Option<usize>,
        residual: f64,
    },
    /// File I/O failure, with the offending path.
    Io { path: String, source: std::io::Error },
    /// Configuration file / flag parsing failure.
    Config(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::SolverFailure {
                what,
                iterations,
                residual,
            } => {
                write!(f, "solver failure: {what} (residual {residual:.3e}")?;
                if let Some(it) = iterations {
                    write!(f, ", {it} iterations")?;
                }
                write!(f, ")")
            }
            Error::Io { path, source } => write!(f, "i/o error on {path}: {source}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }
}
