use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point ({0}, {1}) lies outside the unit square")]
    OutsideDomain(f64, f64),

    #[error("triangle id {0} out of range")]
    InvalidTriangle(usize),

    #[error("quadrature degree {0} unsupported (expected 1..=10)")]
    UnsupportedDegree(usize),

    #[error("invalid physical parameters: {0}")]
    InvalidParams(String),

    #[error("meshes are not nested: {0}")]
    NestingViolation(String),

    #[error("unknown manufactured solution '{0}'")]
    UnknownCase(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
