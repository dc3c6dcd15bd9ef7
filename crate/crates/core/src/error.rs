use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("nominal trajectory infeasible at step {step}: joint increment norm {norm:.3e} exceeds {bound:.3e}")]
    NominalInfeasible { step: usize, norm: f64, bound: f64 },

    #[error("subproblem {subproblem} infeasible: {detail}")]
    Infeasible { subproblem: usize, detail: String },

    #[error("model file: {0}")]
    ModelFile(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::NumericalFailure(msg.into())
    }
}
