use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("zero-strength shock")]
    ZeroStrength,
    #[error("non-admissible shock: {0}")]
    NonAdmissible(String),
    #[error("no connection: {0}")]
    NoConnection(String),
    #[error("insufficient resolution: {0}")]
    Resolution(String),
    #[error("lambda = {0} lies on the essential spectrum")]
    EssentialSpectrum(Complex64),
    #[error("branch ambiguity at lambda = {0}: endstate eigenvalues collide")]
    BranchAmbiguity(Complex64),
    #[error("contour resolution: {0}")]
    ContourResolution(String),
    #[error("continuation lost track: {0}")]
    Continuation(String),
    #[error("step rejected: {0}")]
    StepRejected(String),
    #[error("solution blew up at t = {time}")]
    Blowup { time: f64 },
    #[error("weighted norm overflow (eta * L = {0})")]
    WeightedOverflow(f64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
