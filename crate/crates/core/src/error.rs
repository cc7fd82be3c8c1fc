use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions {0:?}: every extent must be at least 1")]
    InvalidDims(Vec<usize>),

    #[error("image has {actual} values but dimensions {dims:?} require {expected}")]
    LengthMismatch {
        dims: [usize; 3],
        expected: usize,
        actual: usize,
    },

    #[error("{}: expected {expected} bytes for the given dimensions, found {actual}", path.display())]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("NaN at linear index {index}")]
    NaN { index: usize },

    #[error("value {0} is not finite")]
    NonFinite(f32),

    #[error("coordinate {coord:?} out of range for dimensions {dims:?}")]
    CoordOutOfRange { coord: [usize; 3], dims: [usize; 3] },

    #[error("chunk range {start}..{end} is empty or exceeds axis-0 extent {extent}")]
    BadRange {
        start: usize,
        end: usize,
        extent: usize,
    },

    #[error("cannot build a value index from an empty sequence")]
    EmptyIndex,

    #[error("value {0} is not present in the value index")]
    ValueNotIndexed(f32),

    #[error("memory budget of {budget} bytes is below the minimum feasible {minimum} bytes")]
    BudgetTooSmall { budget: u64, minimum: u64 },

    #[error("invalid chunk count {0}")]
    BadChunkCount(usize),

    #[error("source dimensions {source_dims:?} do not match plan dimensions {plan_dims:?}")]
    DimsMismatch {
        source_dims: [usize; 3],
        plan_dims: [usize; 3],
    },

    #[error("chunk {chunk} (rows {start}..{end}): {source}")]
    Chunk {
        chunk: usize,
        start: usize,
        end: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("cannot build a curve from an empty VCEC")]
    EmptyVcec,

    #[error("malformed {what}: {detail}")]
    Parse { what: &'static str, detail: String },

    #[error("invalid generator parameters: {0}")]
    BadGenSpec(String),

    #[error("kernel width must be odd and at least 1, got {0}")]
    BadKernelWidth(usize),

    #[error("pipeline worker panicked")]
    WorkerPanicked,

    #[error(transparent)]
    Io(#[from] io::Error),
}
