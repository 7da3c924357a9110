use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the domain of an operation (dimension, degree,
    /// model parameter, confidence level, ...).
    #[error("domain error: {0}")]
    Domain(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    /// Madogram value for which the Pickands inversion has a non-positive
    /// denominator.
    #[error("madogram inversion failed at w = {w:?}: nu + c(w) = {total} >= 1")]
    Inversion { w: Vec<f64>, total: f64 },

    #[error("column {0} is degenerate (all values tied)")]
    DegenerateColumn(usize),

    #[error("design matrix is rank deficient ({0}); use a finer grid or a smaller degree")]
    RankDeficient(String),

    #[error("quadratic program is infeasible")]
    Infeasible,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{replicates} bootstrap replicates are too few for level alpha = {alpha} (need at least {needed})")]
    TooFewReplicates {
        replicates: usize,
        alpha: f64,
        needed: usize,
    },

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures of the numerical machinery rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient(_) | Error::Infeasible | Error::Numerical(_) | Error::Inversion { .. }
        )
    }
}

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, found })
    }
}
