//! Crate-wide error type.

use std::fmt;
use std::path::PathBuf;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors emitted by the toolkit. Variants carry enough structure to
/// distinguish failure causes in tests and CLI diagnostics.
#[derive(Debug)]
pub enum Error {
    /// Two matrices cannot be combined by the named operation.
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    /// A flat buffer has the wrong length for its consumer.
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    /// An input that must be non-empty was empty.
    EmptyInput { what: &'static str },
    /// A scalar parameter is outside its valid range.
    InvalidParameter { what: &'static str, value: f64 },
    /// A NaN or infinite value reached an operation that requires finite input.
    NonFinite { what: &'static str },
    /// Cosine alignment is undefined for a zero-norm vector.
    ZeroNorm { which: &'static str },
    /// An IDX file starts with the wrong magic number.
    IdxMagic {
        path: PathBuf,
        expected: u32,
        got: u32,
    },
    /// An IDX payload is shorter than its header promises.
    IdxTruncated {
        path: PathBuf,
        expected_bytes: usize,
        got_bytes: usize,
    },
    /// Image and label files disagree on the record count.
    IdxCountMismatch { images: usize, labels: usize },
    /// A checkpoint file does not start with the expected magic bytes.
    CheckpointMagic { got: [u8; 4] },
    /// A checkpoint declares an unsupported format version.
    CheckpointVersion { expected: u32, got: u32 },
    /// A checkpoint payload ended early.
    CheckpointTruncated {
        expected_bytes: usize,
        got_bytes: usize,
    },
    /// Checkpoint header declares sizes inconsistent with its payload.
    CheckpointSize { expected: usize, got: usize },
    /// Model layer sizes are invalid (fewer than two, or a zero width).
    InvalidLayerSizes { sizes: Vec<usize> },
    /// A dataset violates its invariants (label range or pixel range).
    InvalidDataset { reason: String },
    /// Transform parameters are outside their declared ranges.
    InvalidTransform { reason: String },
    /// A requested prefix is longer than the dataset.
    PrefixTooLong { requested: usize, available: usize },
    /// The two transform subsets of a feature-similarity comparison overlap.
    OverlappingTransformSets { transform: String },
    /// No dataset source was configured and no synthetic fallback requested.
    MissingDataset,
    /// A config file or flag value failed to parse.
    Config { reason: String },
    /// An I/O failure, with the path it occurred on.
    Io { path: PathBuf, source: std::io::Error },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { op, left, right } => write!(
                f,
                "{op}: incompatible shapes {}x{} and {}x{}",
                left.0, left.1, right.0, right.1
            ),
            Error::LengthMismatch {
                what,
                expected,
                got,
            } => write!(f, "{what}: expected length {expected}, got {got}"),
            Error::EmptyInput { what } => write!(f, "{what} must not be empty"),
            Error::InvalidParameter { what, value } => {
                write!(f, "invalid {what}: {value}")
            }
            Error::NonFinite { what } => write!(f, "{what} contains a non-finite value"),
            Error::ZeroNorm { which } => {
                write!(f, "cosine alignment undefined: {which} vector has zero norm")
            }
            Error::IdxMagic {
                path,
                expected,
                got,
            } => write!(
                f,
                "{}: bad IDX magic 0x{got:08x}, expected 0x{expected:08x}",
                path.display()
            ),
            Error::IdxTruncated {
                path,
                expected_bytes,
                got_bytes,
            } => write!(
                f,
                "{}: truncated IDX payload, expected {expected_bytes} bytes, got {got_bytes}",
                path.display()
            ),
            Error::IdxCountMismatch { images, labels } => write!(
                f,
                "IDX record count mismatch: {images} images vs {labels} labels"
            ),
            Error::CheckpointMagic { got } => {
                write!(f, "bad checkpoint magic {got:?}, expected \"AFCK\"")
            }
            Error::CheckpointVersion { expected, got } => {
                write!(f, "unsupported checkpoint version {got}, expected {expected}")
            }
            Error::CheckpointTruncated {
                expected_bytes,
                got_bytes,
            } => write!(
                f,
                "truncated checkpoint: expected {expected_bytes} bytes, got {got_bytes}"
            ),
            Error::CheckpointSize { expected, got } => write!(
                f,
                "checkpoint parameter count {got} does not match header sizes ({expected})"
            ),
            Error::InvalidLayerSizes { sizes } => {
                write!(f, "invalid layer sizes {sizes:?}: need >= 2 positive widths")
            }
            Error::InvalidDataset { reason } => write!(f, "invalid dataset: {reason}"),
            Error::InvalidTransform { reason } => write!(f, "invalid transform: {reason}"),
            Error::PrefixTooLong {
                requested,
                available,
            } => write!(
                f,
                "prefix of {requested} records requested but only {available} available"
            ),
            Error::OverlappingTransformSets { transform } => write!(
                f,
                "transform subsets must be disjoint; both contain {transform}"
            ),
            Error::MissingDataset => write!(
                f,
                "no dataset: pass a data directory (or set AUGFORGET_DATA) or enable the synthetic fallback"
            ),
            Error::Config { reason } => write!(f, "config error: {reason}"),
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
