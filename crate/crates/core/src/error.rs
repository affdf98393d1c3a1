use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("argument outside domain: {0}")]
    Domain(String),
    #[error("point coincides with a pole (distance {0:e})")]
    OnPole(f64),
    #[error("kernel singular at the origin")]
    Singularity,
    #[error("bound is vacuous at these parameters: {0}")]
    BoundVacuous(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("dirichlet mask has no interior nodes")]
    EmptyMask,
    #[error("ill-posed: {0}")]
    IllPosed(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
