//! Error type shared by all modules.

use thiserror::Error;

/// Errors produced by construction, solving, and I/O.
///
/// Shape mismatches between fields and systems are programming errors and
/// panic instead; every fallible path that depends on user input or on
/// iterative convergence reports through this enum.
#[derive(Debug, Error)]
pub enum TransportError {
    /// Invalid configuration (violated invariant, non-coercive collision
    /// spectrum, even truncation order, bad step size, ...).
    #[error("configuration error: {0}")]
    Config(String),

    /// An input value outside the mathematical domain of an operation
    /// (non-unit direction vector, non-unit normal, ...).
    #[error("input domain error: {0}")]
    Domain(String),

    /// A malformed mesh (degenerate triangle, dangling boundary edge,
    /// unreadable mesh file, ...).
    #[error("mesh error: {0}")]
    Mesh(String),

    /// The iterative solver did not reach the requested tolerance.
    #[error(
        "solver did not converge within {iterations} iterations \
         (relative residual {residual:.3e}, tolerance {tolerance:.3e})"
    )]
    SolverDiverged {
        iterations: usize,
        residual: f64,
        tolerance: f64,
    },

    /// A solver failure inside the time loop, tagged with the failing step.
    #[error("time step {step} (t = {t}) failed: {source}")]
    StepFailed {
        step: usize,
        t: f64,
        #[source]
        source: Box<TransportError>,
    },

    /// A failure at one point of a convergence-study sweep.
    #[error("study point {param} failed: {source}")]
    StudyPoint {
        param: String,
        #[source]
        source: Box<TransportError>,
    },

    /// Violated size guard of the dense oracle path.
    #[error("dense oracle supports at most {limit} degrees of freedom, got {requested}")]
    OracleSizeGuard { limit: usize, requested: usize },

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
