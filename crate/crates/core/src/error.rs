use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty glyph")]
    EmptyGlyph,

    #[error("invalid glyph: {0}")]
    InvalidGlyph(String),

    #[error("canvas size {0} is below the 32 px minimum")]
    CanvasTooSmall(u32),

    #[error("out of frame")]
    OutOfFrame,

    #[error("invalid transform spec: {0}")]
    InvalidTransform(String),

    #[error("infeasible EF placement: {0}")]
    InfeasiblePlacement(String),

    #[error("set id {0} outside 1..=17")]
    UnknownSet(u32),

    #[error("{path}:{line}: {message}")]
    HumanData {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("degenerate activation: {0}")]
    DegenerateActivation(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    #[error("too few observations for a rank correlation: {0} (need at least 4)")]
    TooFewObservations(usize),

    #[error("unknown probe node `{probe}`; available nodes: {available}")]
    UnknownProbe { probe: String, available: String },

    #[error("model load error: {0}")]
    ModelLoad(String),

    #[error("inference error: {0}")]
    Inference(String),

    #[error("training diverged at epoch {epoch} (loss is not finite)")]
    Diverged { epoch: usize },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("gradient check failed: worst parameter {parameter} analytic={analytic:e} numeric={numeric:e} rel_err={rel_error:e}")]
    GradientCheck {
        parameter: String,
        analytic: f64,
        numeric: f64,
        rel_error: f64,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("plot error in {path}: {message}")]
    Plot { path: PathBuf, message: String },

    #[error("repetition {repetition}: {source}")]
    Repetition {
        repetition: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}
