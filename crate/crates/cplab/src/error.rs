//! Error type shared by every module of the crate.

use thiserror::Error;

/// Everything that can go wrong while building models or evaluating them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CplabError {
    /// A scalar input is outside its admissible range.
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    /// The cutoff box contains no nonzero momentum.
    #[error("empty lattice: floor(Lambda*L) = {modes} leaves no nonzero mode (L = {l}, Lambda = {lambda})")]
    EmptyLattice { l: f64, lambda: f64, modes: i64 },

    /// A profile norm diverges.
    #[error("profile is not square integrable with weight |k|^{p}: {reason}")]
    Integrability { p: i32, reason: String },

    /// The quadratic form has an eigenvalue below the clamping window.
    #[error("quadratic form is not positive semidefinite: eigenvalue {eigenvalue:e} below -{threshold:e}")]
    NotPositiveSemidefinite { eigenvalue: f64, threshold: f64 },

    /// The geometric majorant needed for a series tail does not converge.
    #[error("series tail bound unavailable: a = {a} violates a < {limit}")]
    SeriesDivergence { a: f64, limit: f64 },

    /// An index word is outside the class a bound applies to.
    #[error("word {word} cannot be classified: {reason}")]
    Classification { word: String, reason: String },

    /// Adaptive quadrature ran out of budget before reaching its tolerance.
    #[error("{context}: tolerance not met (estimate {estimate:e}, error {error:e}, requested relative {requested:e})")]
    Accuracy {
        context: String,
        estimate: f64,
        error: f64,
        requested: f64,
    },

    /// Power-law fit cannot be formed on the requested window.
    #[error("power-law fit: {0}")]
    FitDomain(String),

    /// Configuration document rejected at parse time.
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },

    /// Reading or writing a file failed.
    #[error("i/o error on {path}: {reason}")]
    Io { path: String, reason: String },
}

impl CplabError {
    pub(crate) fn invalid(name: &str, reason: impl Into<String>) -> Self {
        CplabError::InvalidParameter {
            name: name.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn config(key: &str, reason: impl Into<String>) -> Self {
        CplabError::Config {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, CplabError>;
