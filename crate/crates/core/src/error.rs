use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("matrix must have at least one row and one column (got {rows}x{dim})")]
    EmptyMatrix { rows: usize, dim: usize },
    #[error("data length {len} does not match {rows}x{dim}")]
    ShapeMismatch { rows: usize, dim: usize, len: usize },
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("k = {k} out of range for {n} points (need 1 <= k <= n-1)")]
    KOutOfRange { k: usize, n: usize },
    #[error("row {row} has zero norm; cosine distance is undefined")]
    ZeroNorm { row: usize },
    #[error("point {j} is not among the nearest neighbors of point {i}")]
    NotANeighbor { i: usize, j: usize },
    #[error("index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("invalid labels: {0}")]
    InvalidLabels(String),
    #[error("column {col} has zero variance")]
    ZeroVariance { col: usize },
    #[error("vector {index} is not unit norm (norm {norm})")]
    NotUnitNorm { index: usize, norm: f64 },
    #[error("no proxy for cluster {0}")]
    MissingProxy(usize),
    #[error("no sample in the batch has both a positive and a negative")]
    NoEligibleSample,
    #[error("no non-noise cluster to sample from")]
    NoClusters,
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
