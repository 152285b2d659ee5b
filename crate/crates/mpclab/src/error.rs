//! Error type shared by every module.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("window [{start}, {end}] is out of range for horizon {horizon}")]
    WindowOutOfRange {
        start: usize,
        end: usize,
        horizon: usize,
    },
    #[error("KKT matrix of window [{start}, {end}] is singular")]
    SingularKkt { start: usize, end: usize },
    #[error("infeasible problem: {0}")]
    Infeasible(String),
    #[error("active-set iteration cap of {0} reached")]
    IterationLimit(usize),
    #[error("reduced Hessian is not positive definite")]
    NotStronglyConvex,
    #[error("table `{table}` has no entry for offset {offset}")]
    MissingTableEntry { table: &'static str, offset: usize },
    #[error("MPC run aborted at step {step}: {source}")]
    MpcAborted {
        step: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            found,
        }
    }

    /// True when the error reflects a numerical or feasibility failure rather than bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::SingularKkt { .. }
                | Error::Infeasible(_)
                | Error::IterationLimit(_)
                | Error::NotStronglyConvex
                | Error::MpcAborted { .. }
        )
    }
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositive { name, value })
    }
}
