use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("time step {dt:e} s exceeds stability limit {limit:e} s")]
    Stability { dt: f64, limit: f64 },

    #[error("non-finite state: {0}")]
    NonFinite(&'static str),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("unknown event index {0}")]
    UnknownEvent(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("calibration budget exhausted after {evaluated} candidates; best score {best_score}: {best}")]
    CalibrationFailed {
        evaluated: usize,
        best_score: f64,
        best: String,
    },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("empty label map")]
    EmptyLabelMap,

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error(
        "normalization failed: layer {layer} has no positive activation on the calibration batch"
    )]
    Normalization { layer: usize },

    #[error("weights file: {0}")]
    WeightsFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics (stability, divergence, calibration)
    /// as opposed to bad input data or configuration.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Stability { .. }
                | Error::NonFinite(_)
                | Error::CalibrationFailed { .. }
                | Error::Divergence { .. }
                | Error::Normalization { .. }
        )
    }
}
