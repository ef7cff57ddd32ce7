use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left_width}x{left_height} vs {right_width}x{right_height}")]
    DimensionMismatch {
        left_width: usize,
        left_height: usize,
        right_width: usize,
        right_height: usize,
    },
    #[error("invalid raster: {0}")]
    InvalidRaster(&'static str),
    #[error("census window must be odd and within 3..=9, got {0}")]
    InvalidWindow(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
    #[error("disparity map has no valid pixel")]
    NoValidPixels,
    #[error("seed set is empty")]
    EmptySeeds,
    #[error("seed ({x}, {y}) outside a {width}x{height} image")]
    SeedOutOfBounds {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    #[error("duplicate seed at ({x}, {y})")]
    DuplicateSeed { x: usize, y: usize },
    #[error("malformed seed list, line {line}: {reason}")]
    SeedFormat { line: usize, reason: String },
    #[error("no pixel left to evaluate")]
    NoEvaluatedPixels,
    #[error("non-occluded mask is valid at ({x}, {y}) where the all-region mask is not")]
    MaskContainment { x: usize, y: usize },
    #[error("completer returned a map with {valid} of {total} pixels valid")]
    SparseCompletion { valid: usize, total: usize },
    #[error("completer failed: {0}")]
    Completer(String),
    #[error("completion {iteration} failed: {cause}")]
    Iteration { iteration: usize, cause: Box<Error> },
}

impl Error {
    pub(crate) fn mismatch(a: (usize, usize), b: (usize, usize)) -> Self {
        Error::DimensionMismatch {
            left_width: a.0,
            left_height: a.1,
            right_width: b.0,
            right_height: b.1,
        }
    }
}
