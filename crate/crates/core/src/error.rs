use thiserror::Error;

/// Location of a non-finite value produced by a solver.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub t: f64,
    pub y: f64,
    pub z: Option<f64>,
    pub value: f64,
}

impl std::fmt::Display for NodeReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.z {
            Some(z) => write!(f, "t={}, y={}, z={}: value {}", self.t, self.y, z, self.value),
            None => write!(f, "t={}, y={}: value {}", self.t, self.y, self.value),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown loss preset `{0}`")]
    UnknownLoss(String),
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("undefined extended-real arithmetic: {0}")]
    UndefinedArithmetic(&'static str),
    #[error("no convergence: {0}")]
    NoConvergence(String),
    #[error("non-finite value at {0}")]
    NonFinite(NodeReport),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("r-grid too small: objective still decreasing at edge r = {edge}")]
    RGridTooSmall { edge: f64 },
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
