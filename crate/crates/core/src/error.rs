//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
///
/// The variants are grouped by how the CLI maps them to exit codes:
/// configuration and usage problems (exit 2), solver or certification
/// failures (exit 3), and model-validity failures (exit 4). No partial
/// "secure" output is ever produced on the latter two.
#[derive(Debug, Error)]
pub enum Error {
    /// A numeric argument is outside its mathematical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Mismatched shapes, mode counts, or other caller mistakes.
    #[error("usage error: {0}")]
    Usage(String),

    /// Two eigenvectors claim the same photon-number tag. Signals q too
    /// small or a pathological intensity.
    #[error("degenerate spectrum: {0}")]
    Degeneracy(String),

    /// A spectral gap needed by the perturbation bounds is non-positive;
    /// the certified bounds do not apply at these parameters.
    #[error("invalid spectral gap: {0}")]
    Gap(String),

    /// The SDP constraints are mutually inconsistent (bad observations or
    /// projection fidelity too small).
    #[error("SDP infeasible: {0}")]
    Infeasible(String),

    /// The solver did not reach the requested accuracy; the pipeline
    /// refuses to certify from such a solve.
    #[error("solver did not converge to tolerance: {0}")]
    SolverAccuracy(String),

    /// Configuration file or parameter validation failure.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 config/usage, 3 solver, 4 model validity.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Usage(_) | Error::Domain(_) | Error::Io(_) => 2,
            Error::Infeasible(_) | Error::SolverAccuracy(_) => 3,
            Error::Gap(_) | Error::Degeneracy(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
