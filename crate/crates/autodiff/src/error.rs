use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("shape {shape:?} does not describe {len} values")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("axis {axis} out of range for rank {rank}")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("{0}: empty input")]
    Empty(&'static str),
    #[error("{op}: index {index} out of bounds for length {len}")]
    IndexOutOfBounds { op: &'static str, index: usize, len: usize },
    #[error("expected a single value, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("backward already ran on this tape; reset it first")]
    BackwardTwice,
    #[error("non-finite value while perturbing parameter {param} at element {index}")]
    NonFinite { param: usize, index: usize },
}
