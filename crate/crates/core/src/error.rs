//! Error types shared across the library.

use thiserror::Error;

/// A single validation finding, addressed by a JSON-pointer-ish path into
/// the scenario document (e.g. `controller.delta`).
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed arguments to an operation (dimension mismatches and the like).
    #[error("input error: {0}")]
    Input(String),

    /// A realization or schedule could not be constructed from the given data.
    #[error("construction error: {0}")]
    Construction(String),

    /// The game failed monotonicity certification; downstream controllers
    /// refuse uncertified games.
    #[error("certification failure: {0}")]
    Certification(String),

    /// An iterative solve ran out of budget; carries the final residual.
    #[error("{message} (residual {residual:.3e})")]
    Convergence { message: String, residual: f64 },

    /// Scenario-level validation findings, one per offending field.
    #[error("validation failed: {}", format_diagnostics(.0))]
    Validation(Vec<Diagnostic>),

    /// Scenario document could not be parsed at all.
    #[error("parse error: {0}")]
    Parse(String),

    /// The integrator produced a non-finite value.
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn construction(msg: impl Into<String>) -> Self {
        Error::Construction(msg.into())
    }

    /// True for errors a caller should treat as bad input rather than a
    /// failed run (exit code 2 vs 3 in the CLI).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Input(_)
                | Error::Construction(_)
                | Error::Certification(_)
                | Error::Validation(_)
                | Error::Parse(_)
        )
    }
}

fn format_diagnostics(diags: &[Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
