use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed FMAP container: {0}")]
    MalformedContainer(String),

    #[error("shape mismatch in layer `{layer}`: {detail}")]
    ShapeMismatch { layer: String, detail: String },

    #[error("non-finite value in layer `{layer}` at channel {channel} (x={x}, y={y})")]
    NonFinite {
        layer: String,
        channel: usize,
        x: usize,
        y: usize,
    },

    #[error("unknown layer `{0}`")]
    UnknownLayer(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    /// A type invariant failed; `field` is a path such as `templates[1].template_id`.
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown pattern `{0}`")]
    UnknownPattern(String),

    #[error("pattern `{0}` is already pruned")]
    AlreadyPruned(String),

    #[error("unit ({x}, {y}) lies outside the deformation range of pattern `{pattern}`")]
    OutsideDeformationRange { pattern: String, x: usize, y: usize },

    #[error("AOG has no active patterns")]
    EmptyAog,

    #[error("brute-force enumeration of {size} configurations exceeds cap {cap}")]
    EnumerationCap { size: u128, cap: u128 },

    #[error("template `{0}` has no part annotations")]
    NoAnnotations(String),

    #[error("scope region contains no unit centers in layer `{layer}` (image `{image}`)")]
    EmptyScope { layer: String, image: String },

    #[error("missing features for image `{0}`")]
    MissingFeatures(String),

    #[error("no parse available for image `{0}`")]
    NoParse(String),

    #[error("pattern `{0}` has no assignment in the parse")]
    MissingAssignment(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("undo of {requested} operations requested but only {available} recorded")]
    UndoUnderflow { requested: usize, available: usize },

    #[error("degenerate object box: {0}")]
    DegenerateBox(String),

    #[error("synthetic blob outside grid: {0}")]
    BlobOutsideGrid(String),

    #[error("png encoding failed: {0}")]
    Png(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
