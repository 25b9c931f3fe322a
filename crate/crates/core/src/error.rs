use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: String, expected: usize, got: usize },

    #[error("non-finite value while evaluating {what} at x = {x:?}")]
    NonFinite { what: String, x: Vec<f64> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("chain level {index} out of range for relative degree {degree}")]
    IndexOutOfRange { index: usize, degree: usize },

    #[error("cost matrix is not symmetric positive definite at x = {x:?}")]
    NotPositiveDefinite { x: Vec<f64> },

    #[error("R-CBF degeneracy at boundary: x = {x:?}, |L_g h| = {lg_h_norm:e}, h = {h:e}")]
    Degenerate { x: Vec<f64>, lg_h_norm: f64, h: f64 },

    #[error("singular controller input map (condition number {condition:e}) at x_c = {x_c:?}")]
    SingularControlDynamics { x_c: Vec<f64>, condition: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(what: &str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what: what.to_string(), expected, got })
    }
}
