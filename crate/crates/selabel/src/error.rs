//! Error type shared across the crate.
//!
//! Every failure is tagged with one of four categories so callers (and the
//! command-line frontend) can report errors uniformly:
//!
//! * `config`   — invalid settings: out-of-range hyperparameters, unknown
//!   strategy names, malformed configuration files.
//! * `data`     — invalid input data: schema violations, unparseable cells,
//!   datasets that break a documented invariant.
//! * `numeric`  — numerical failure during computation: infeasible linear
//!   programs, non-finite objectives, degenerate designs.
//! * `contract` — an internal pipeline invariant was violated, e.g. weights
//!   presented to the learner that do not match the fold plan they claim to
//!   come from.

use thiserror::Error;

/// Crate-wide error type. The display form is `<category>: <message>`.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or hyperparameter.
    #[error("config: {0}")]
    Config(String),
    /// Invalid input data.
    #[error("data: {0}")]
    Data(String),
    /// Numerical failure (infeasibility, non-finite values, degeneracy).
    #[error("numeric: {0}")]
    Numeric(String),
    /// Violated internal contract between pipeline stages.
    #[error("contract: {0}")]
    Contract(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// Stable category label used by the command-line frontend.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Numeric(_) => "numeric",
            Error::Contract(_) => "contract",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_is_prefixed_with_category() {
        let e = Error::numeric("denominator vanished");
        assert_eq!(e.to_string(), "numeric: denominator vanished");
        assert_eq!(e.category(), "numeric");
    }
}
