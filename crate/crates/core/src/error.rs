use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("matrix is not unitary (max deviation {0:.3e})")]
    NotUnitary(f64),
    #[error("expected a {expected}x{expected} matrix, got {rows}x{cols}")]
    Dimension {
        expected: usize,
        rows: usize,
        cols: usize,
    },
    #[error("vector length {0} is not a perfect square")]
    NotPerfectSquare(usize),
    #[error("density matrix trace is {0}, expected 1")]
    TraceNotUnity(f64),
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid control pulse: {0}")]
    InvalidPulse(String),
    #[error("unsupported gate '{0}'")]
    UnsupportedGate(String),
    #[error("degenerate fit window: {0}")]
    DegenerateFit(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
