use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: invalid shape {shape:?}: {reason}")]
    BadShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: String,
    },

    #[error("backward root must be a scalar, got shape {shape:?}")]
    NonScalarRoot { shape: Vec<usize> },

    #[error("non-finite value in {context} at component {index}")]
    NonFinite { context: String, index: usize },

    #[error("invalid camera: {0}")]
    BadCamera(String),

    #[error("pixel ({row}, {col}) out of bounds for {width}x{height} image (index {index})")]
    PixelOutOfBounds {
        row: f64,
        col: f64,
        width: usize,
        height: usize,
        index: usize,
    },

    #[error("degenerate scene bounds: zero extent on axis {axis}")]
    DegenerateBounds { axis: usize },

    #[error("{path}:{line}: {reason}")]
    ParseLine {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("unsupported camera model {model:?} (line {line})")]
    UnknownCameraModel { model: String, line: usize },

    #[error("dangling reference: {0}")]
    DanglingReference(String),

    #[error("bad PFM file: {0}")]
    BadPfm(String),

    #[error("bad scene description: {0}")]
    BadScene(String),

    #[error("bad config: {0}")]
    BadConfig(String),

    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("training aborted at iteration {iteration}: non-finite {term}")]
    NonFiniteLoss { iteration: u64, term: String },

    #[error("scale/shift fit needs >= 2 matches with distinct prior depths")]
    RankDeficientFit,

    #[error("dataset error: {0}")]
    BadDataset(String),

    #[error("image error: {0}")]
    Image(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
