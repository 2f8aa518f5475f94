use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value violates a documented type invariant (non-finite sample,
    /// mismatched lengths, ...).
    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("dimension mismatch: {0}")]
    Size(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("argument outside its domain: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("insufficient data: need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },

    /// The Lissajous cloud collapsed (δ near 0 or π) and the normal
    /// equations cannot be solved reliably.
    #[error("degenerate cloud: {0}")]
    DegenerateCloud(String),

    /// The fitted conic is not an origin-centered ellipse, so no phase
    /// step can be derived from it.
    #[error("degenerate fit: theta1 = {theta1}, theta2 = {theta2}")]
    DegenerateFit { theta1: f64, theta2: f64 },

    #[error("robust weights collapsed after {iteration} iterations; try a larger kappa")]
    RobustCollapse { iteration: usize },

    #[error("filter bank response is zero everywhere")]
    DegenerateResponse,

    #[error("missing ground truth: {0}")]
    MissingTruth(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A pipeline stage failed; `stage` names it.
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// True for failures caused by numerically degenerate data rather than
    /// malformed input.
    pub fn is_degeneracy(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_degeneracy();
        }
        matches!(
            self,
            Error::DegenerateCloud(_)
                | Error::DegenerateFit { .. }
                | Error::RobustCollapse { .. }
                | Error::DegenerateResponse
                | Error::InsufficientData { .. }
        )
    }
}
