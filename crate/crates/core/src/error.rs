//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// A parameter or argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested configuration space is empty (no admissible path tuple).
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// An iterative numerical procedure failed to converge.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An enumeration would exceed the configured size cap.
    #[error("too large: {0}")]
    TooLarge(String),

    /// A rejection sampler ran out of tries; carries the running acceptance
    /// estimate observed so far.
    #[error("acceptance too small: {hits}/{tries} hits (z_hat = {z_hat:.3e})")]
    AcceptanceTooSmall { z_hat: f64, hits: u64, tries: u64 },
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn infeasible(msg: impl Into<String>) -> Self {
        Error::Infeasible(msg.into())
    }

    /// Machine-readable kind tag, used by the CLI for exit codes and
    /// diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Domain(_) => "domain",
            Error::Infeasible(_) => "infeasible",
            Error::Numeric(_) => "numeric",
            Error::TooLarge(_) => "too-large",
            Error::AcceptanceTooSmall { .. } => "acceptance-too-small",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
