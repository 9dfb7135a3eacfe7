use beamseq_core::dataset::DatasetError;
use beamseq_core::phy::PhyError;
use beamseq_core::scene::SceneError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("positioning error magnitude must be finite and >= 0, got {0}")]
    InvalidErrorMagnitude(f64),
    #[error("{bs} has no direct-link angle toward ({x}, {y})")]
    NoDirectLink { bs: String, x: f64, y: f64 },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("delay {delay} slots is outside the predicted horizon of {horizon} slots")]
    DelayOutOfRange { delay: usize, horizon: usize },
    #[error("scheme '{scheme}': {reason}")]
    BadPredictions { scheme: String, reason: String },
    #[error("sample sets differ between schemes: {0}")]
    MismatchedSamples(String),
    #[error("trajectory {trajectory_id} is in outage at slot {slot}")]
    Outage { trajectory_id: u32, slot: usize },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;
