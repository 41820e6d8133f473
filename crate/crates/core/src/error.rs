use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("could not place {placed}/{requested} spikes with d_min={d_min} after {attempts} draws")]
    Placement {
        requested: usize,
        placed: usize,
        d_min: usize,
        attempts: usize,
    },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("power iteration did not converge after {iterations} iterations (last estimate {last_estimate})")]
    NonConvergence { iterations: usize, last_estimate: f64 },

    #[error("objective increased at iteration {iteration}: {previous} -> {current}")]
    Divergence {
        iteration: usize,
        previous: f64,
        current: f64,
    },

    #[error("constraint appears infeasible: violation stagnated at {violation} after {iterations} iterations")]
    Infeasible { violation: f64, iterations: usize },

    #[error("non-finite value in layer {layer}")]
    NonFinite { layer: usize },

    #[error("training aborted: non-finite loss at epoch {epoch}, batch {batch}")]
    TrainingAborted { epoch: usize, batch: usize },

    #[error("reference signal is zero")]
    ZeroReference,

    #[error("empty support")]
    EmptySupport,

    #[error("zero denominator in normalized error")]
    ZeroDenominator,

    #[error("record {index}: {source}")]
    Record {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    #[error("malformed data in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::InvalidSpec(msg.into())
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::LengthMismatch { expected, got });
    }
    Ok(())
}
