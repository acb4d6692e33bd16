use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Reference data violates the small-curvature or shape invariants.
    #[error("invalid reference data: {0}")]
    InvalidData(String),

    #[error("principal curvature {value} outside the admissible range (|lambda| <= {limit})")]
    Domain { value: f64, limit: f64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("singular denominator {value:e} in averaged mean curvature formula")]
    SingularDenominator { value: f64 },

    /// The evolving surface is no longer a graph over the reference leaf.
    #[error("graph violation at grid point ({ix}, {iy}): {detail}")]
    GraphViolation { ix: usize, iy: usize, detail: String },

    #[error("time step failed: {0}")]
    StepFailure(String),

    #[error("eigen-iteration did not converge after {iterations} iterations (last change {last_change:e})")]
    IterationFailure { iterations: usize, last_change: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {context}: {detail}")]
    Parse { context: String, detail: String },

    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
