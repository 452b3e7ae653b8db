use thiserror::Error;

/// Errors surfaced by the library.
///
/// Estimator non-existence (degenerate normal equations, non-positive
/// growth estimates, ...) is *not* an error: it is reported as a typed
/// outcome by the estimation routines so that experiment reports can
/// count it. `CbiError` covers genuine misuse and numerical failure.
#[derive(Debug, Error)]
pub enum CbiError {
    /// An argument is outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A numerical routine failed to reach its accuracy target.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// A configuration file or parameter set failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// File or serialization problems at the CLI boundary.
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, CbiError>;
