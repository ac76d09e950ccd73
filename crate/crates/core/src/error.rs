use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse grouping of errors, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Malformed input data, files, or configuration that does not fit the data.
    Data,
    /// A numerical routine failed (factorization, convergence, symmetry).
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("label {label} at sample {index} is outside 0..{classes}")]
    LabelOutOfRange {
        index: usize,
        label: usize,
        classes: usize,
    },
    #[error("class {class} has no samples")]
    EmptyClass { class: usize },
    #[error("non-finite feature value at row {row}, sample {sample}")]
    NonFiniteFeature { row: usize, sample: usize },
    #[error("class index disagrees with labels at sample {index}")]
    PartitionMismatch { index: usize },
    #[error("non-finite value in input matrix at ({row}, {col})")]
    NonFiniteInput { row: usize, col: usize },
    #[error("neighbor count {k} exceeds {candidates} candidates{}", context_suffix(.class, .sample))]
    KTooLarge {
        k: usize,
        candidates: usize,
        class: Option<usize>,
        sample: Option<usize>,
    },
    #[error("regularization parameter is zero; use the uniform fallback")]
    GammaZero,
    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },
    #[error("eigen decomposition did not converge")]
    NoConvergence,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("requested dimension {requested} exceeds available {available}")]
    DimensionTooLarge { requested: usize, available: usize },
    #[error("scatter matrix needs at least two samples")]
    SingleSample,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("max_iters must be positive")]
    NoIterations,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("bad IDX magic {found:#010x} (expected {expected:#010x})")]
    BadMagic { expected: u32, found: u32 },
    #[error("file {} is truncated", .path.display())]
    TruncatedFile { path: PathBuf },
    #[error("{images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("line {line}: expected {expected} fields, found {found}")]
    RaggedRow {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column}: {value:?} is not a number")]
    NonNumericCell {
        line: usize,
        column: String,
        value: String,
    },
    #[error("column {0:?} not found in header")]
    MissingColumn(String),
    #[error("bad PGM header in {}: {reason}", .path.display())]
    BadPgmHeader { path: PathBuf, reason: String },
    #[error("image {} is {found:?}, expected {expected:?}", .path.display())]
    GeometryMismatch {
        path: PathBuf,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("manifest line {line}: {reason}")]
    BadManifest { line: usize, reason: String },
    #[error("class {class} has {available} samples, {requested} requested")]
    NotEnoughSamples {
        class: usize,
        available: usize,
        requested: usize,
    },

    #[error("training set is empty")]
    EmptyTrainSet,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    Empty,
    #[error("unknown class {0}")]
    UnknownClass(usize),
    #[error("trace has no watched sample")]
    NoWatchedSample,
    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn context_suffix(class: &Option<usize>, sample: &Option<usize>) -> String {
    match (class, sample) {
        (Some(c), Some(s)) => format!(" (class {c}, sample {s})"),
        (Some(c), None) => format!(" (class {c})"),
        _ => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::NotSymmetric { .. }
            | Error::NoConvergence
            | Error::NotPositiveDefinite
            | Error::GammaZero => ErrorKind::Numerical,
            Error::Seed { source, .. } => source.kind(),
            _ => ErrorKind::Data,
        }
    }
}
