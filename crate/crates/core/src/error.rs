use thiserror::Error;

/// Errors produced by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid density: {0}")]
    InvalidDensity(String),

    #[error("field length {found} does not match grid with {expected} cells")]
    FieldLength { expected: usize, found: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("test point {point:?} from cell {cell} escaped the target domain")]
    EscapedDomain { cell: usize, point: [f64; 2] },

    #[error("cell {index} carries zero (or negative) mass: {value}")]
    ZeroMassCell { index: usize, value: f64 },

    #[error("eigensolver did not converge after {iterations} iterations (worst residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("level-set sweep produced no usable contour")]
    EmptySweep,

    #[error("undefined ratio: {0}")]
    UndefinedRatio(String),
}

pub type Result<T> = std::result::Result<T, Error>;
