use thiserror::Error;

/// Errors shared across the toolkit.
///
/// Numerical routines return `-inf` log-densities rather than errors wherever
/// that lets quadrature sums degrade gracefully; these variants are reserved
/// for conditions that make a computation meaningless.
#[derive(Debug, Clone, Error)]
pub enum DeconvError {
    /// A distribution or model parameter violates its constraints.
    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),

    /// An integration range collapsed (hi <= lo).
    #[error("DegenerateRange: {0}")]
    DegenerateRange(String),

    /// Product-mode data must be strictly positive.
    #[error("NonPositiveData: {0}")]
    NonPositiveData(String),

    /// The noise distribution carries non-negligible mass at a <= 0,
    /// so the log-space transform is refused.
    #[error("NonPositiveSupport: {0}")]
    NonPositiveSupport(String),

    /// An evaluation grid misses too much ground-truth mass.
    #[error("InadequateGrid: {0}")]
    InadequateGrid(String),
}

impl DeconvError {
    /// Stable short name, used by the CLI when reporting numerical failures.
    pub fn name(&self) -> &'static str {
        match self {
            DeconvError::InvalidParameter(_) => "InvalidParameter",
            DeconvError::DegenerateRange(_) => "DegenerateRange",
            DeconvError::NonPositiveData(_) => "NonPositiveData",
            DeconvError::NonPositiveSupport(_) => "NonPositiveSupport",
            DeconvError::InadequateGrid(_) => "InadequateGrid",
        }
    }
}

pub type Result<T> = std::result::Result<T, DeconvError>;
