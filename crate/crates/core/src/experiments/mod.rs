//! Synthetic benchmark data, the shipped prior library and error metrics.

mod datasets;
mod library;
mod metrics;
mod table;

pub use datasets::{
    gen_hyperelastic, gen_isotherm, ogden, HyperelasticSpec, Isotherm, IsothermSpec, Ranges, Splits,
    MAX_POLE_RESAMPLES, POLE_TOLERANCE,
};
pub use library::{library_prior, library_source, prior_library, LIBRARY};
pub use metrics::{dataset_metrics, rmse, DatasetMetrics};
pub use table::Table;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("length mismatch: {predictions} predictions for {targets} targets")]
    LengthMismatch { predictions: usize, targets: usize },
    #[error("empty input")]
    Empty,
    #[error("invalid spec: {0}")]
    Spec(String),
    #[error("unknown isotherm `{0}`")]
    UnknownIsotherm(String),
    #[error("unknown library prior `{0}`")]
    UnknownPrior(String),
    #[error("no input point away from a pole after {0} draws")]
    Pole(usize),
    #[error("csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Inference(#[from] crate::inference::InferenceError),
}
