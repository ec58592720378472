use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum SsnError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("component index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("sample set is empty")]
    EmptySample,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("direction is not a descent direction: p^T g = {0}")]
    NotDescent(f64),

    #[error("Armijo search failed after {trials} trials (last alpha = {last_alpha:e}, last value = {last_value:e})")]
    LineSearchFailed {
        trials: usize,
        last_alpha: f64,
        last_value: f64,
    },

    #[error("inexact solve failed: {0}")]
    InexactSolveFailed(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("discriminant is negative: eps2 = {eps2:e} exceeds the bound {bound:e} = 3*sqrt(1-eps1)*gamma^2*(1-2*eps1-2*(1-eps1)*beta)^2/(8*L*sqrt(kappa_tilde))")]
    NegativeDiscriminant { eps2: f64, bound: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("label {label} at row {row} is not valid for the {family} family")]
    InvalidLabel {
        row: usize,
        label: f64,
        family: &'static str,
    },

    #[error("no solver run converged; optimum unavailable")]
    NoConvergedRun,

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SsnError>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> SsnError {
    SsnError::InvalidParameter {
        name,
        reason: reason.into(),
    }
}

/// Checks `lo < value < hi` (open interval).
pub(crate) fn check_open_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("{value} must lie in (0, 1)")))
    }
}
