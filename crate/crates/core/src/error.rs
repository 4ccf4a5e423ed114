use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures raised by a model backend.
///
/// `Transport` is kept apart from everything else so callers can tell an
/// unreachable adapter from one that answered with nonsense.
#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport error talking to {endpoint}: {message}")]
    Transport { endpoint: String, message: String },
    #[error("backend protocol error from {endpoint}: {message}")]
    Protocol { endpoint: String, message: String },
    #[error("backend returned {got} masks for {expected} boxes")]
    CountMismatch { expected: usize, got: usize },
    #[error("backend contract violated: {0}")]
    Contract(String),
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("length mismatch: {left} candidates vs {right} prompts")]
    LengthMismatch { left: usize, right: usize },
    #[error("invalid box ({x0}, {y0}, {x1}, {y1}) for a {width}x{height} image")]
    InvalidBox {
        x0: u32,
        y0: u32,
        x1: u32,
        y1: u32,
        width: u32,
        height: u32,
    },
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("invalid run-length encoding: {0}")]
    InvalidRle(String),
    #[error("invalid map file: {0}")]
    InvalidMapFile(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("invalid image: {0}")]
    InvalidImage(String),
    #[error("empty mask for candidate `{0}`")]
    EmptyMask(String),
    #[error("saliency needs at least two feature cells, got {0}")]
    DegenerateGrid(usize),
    #[error("max-F1-pixel is undefined: no positive ground-truth pixel")]
    NoPositivePixels,
    #[error("category `{category}`: {source}")]
    Category {
        category: String,
        #[source]
        source: Box<Error>,
    },
    #[error("image `{image_id}`: {source}")]
    Image {
        image_id: String,
        #[source]
        source: Box<Error>,
    },
    #[error("manifest file not found: {}", .0.display())]
    ManifestNotFound(PathBuf),
    #[error("manifest schema violation: {0}")]
    ManifestSchema(String),
    #[error("referenced file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("unreadable image {}: {message}", .path.display())]
    UnreadableImage { path: PathBuf, message: String },
    #[error("fixture error: {0}")]
    Fixture(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("io error at {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image codec error: {0}")]
    Codec(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_image(self, image_id: &str) -> Self {
        Error::Image {
            image_id: image_id.to_string(),
            source: Box::new(self),
        }
    }

    pub fn in_category(self, category: &str) -> Self {
        Error::Category {
            category: category.to_string(),
            source: Box::new(self),
        }
    }

    /// Innermost error, with image/category context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Image { source, .. } | Error::Category { source, .. } => source.root(),
            other => other,
        }
    }

    pub fn is_transport(&self) -> bool {
        matches!(self.root(), Error::Backend(BackendError::Transport { .. }))
    }

    pub fn is_backend(&self) -> bool {
        matches!(self.root(), Error::Backend(_))
    }
}
