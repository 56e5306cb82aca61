use thiserror::Error;

#[derive(Debug, Error, Clone)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no connection: {0}")]
    NoConnection(String),
    #[error("ambiguous branch: {0}")]
    Ambiguous(String),
    #[error("not a shock: {0}")]
    NotAShock(String),
    #[error("hypothesis failure ({hyp}): {msg}")]
    Hypothesis { hyp: String, msg: String },
    #[error("inconsistent classification: {0}")]
    Inconsistent(String),
    #[error("frame continuation failed at t = {t}: {msg}")]
    Continuation { t: f64, msg: String },
    #[error("contour passes through a root near {re} + {im}i (|D| = {abs})")]
    ThroughRoot { re: f64, im: f64, abs: f64 },
    #[error("indeterminate: {0}")]
    Indeterminate(String),
    #[error("integration failed: {0}")]
    Integration(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<crate::ode::OdeError> for Error {
    fn from(e: crate::ode::OdeError) -> Self {
        Error::Integration(e.to_string())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
