use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {left_w}x{left_h} vs {right_w}x{right_h}")]
    DimensionMismatch {
        left_w: usize,
        left_h: usize,
        right_w: usize,
        right_h: usize,
    },

    /// No enclosed region survived gap closing.
    #[error("open contour: no enclosed region found after gap closing with {tolerance}")]
    OpenContour { tolerance: String },

    #[error("empty mask")]
    EmptyMask,

    #[error("cluster count mismatch: {0} vs {1}")]
    ClusterCountMismatch(usize, usize),

    #[error("covariance of cluster {0} is not positive definite")]
    SingularCovariance(usize),

    #[error("unknown cluster index {0}")]
    UnknownCluster(usize),

    #[error("unknown color [{0}, {1}, {2}]")]
    UnknownColor(u8, u8, u8),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, unwrapping any stage annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
