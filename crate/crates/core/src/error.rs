use thiserror::Error;

/// Errors raised by the numerical routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("quadrature did not converge (error estimate {estimate:e}, partial value {partial})")]
    Accuracy { estimate: f64, partial: f64 },
    #[error("synthesized field is not real: relative imaginary residue {0:e}")]
    NotReal(f64),
    #[error("ordering error: {0}")]
    Ordering(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("incompatible inputs: {0}")]
    Incompatible(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("fit error: {0}")]
    Fit(String),
    #[error("blowup at time step {step}")]
    Blowup { step: usize },
    #[error("no local solution found after {halvings} halvings: {last}")]
    NoLocalSolution { halvings: usize, last: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
