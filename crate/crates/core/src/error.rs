use thiserror::Error;

/// Errors produced anywhere in the registration toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("singular transform: det(S) = {det:e}")]
    SingularTransform { det: f64 },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("dimension mismatch: {left:?} vs {right:?}")]
    DimensionMismatch {
        left: (usize, usize, usize),
        right: (usize, usize, usize),
    },

    #[error("resample factor {0} yields an empty image")]
    InvalidFactor(f64),

    #[error("infeasible layout: {0}")]
    InfeasibleLayout(String),

    #[error("marker {index} not found: {reason}")]
    MarkerNotFound { index: usize, reason: String },

    #[error("segment has zero mass")]
    ZeroMass,

    #[error("degenerate anchors: condition number of AA' is {0:e}")]
    DegenerateAnchors(f64),

    #[error("bar {index}: only {percent:.1}% of the band maps inside the captured frame")]
    InsufficientOverlap { index: usize, percent: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("triplet rejected: {0}")]
    TripletRejected(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Wraps `self` with the name of the pipeline stage that produced it.
    pub fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
