//! Datasets, training, evaluation sweeps and the built-in verification suite.

mod config;
mod dataset;
mod experiment;
mod metrics;
mod train;
mod verify;

pub use config::{
    ChannelSpec, DataSpec, EstimatorKind, ExperimentSpec, ModelSpec, Profile, RunConfig, Scenario, SnrPolicy,
    TrainSpec, CONFIG_VERSION,
};
pub use dataset::{dataset_tensors, generate_dataset, generate_sample, pack_batch};
pub use experiment::{run_experiment, ExperimentResult, ResultRow, RESULTS_HEADER};
pub use metrics::{db, mse_loss, nmse, NmseStats};
pub use train::{
    evaluate_nmse_db, train, write_log_header, EpochRecord, TrainConfig, TrainOutcome, TrainState, EVAL_BATCH,
    TRAIN_ENTRY_PREFIX,
};
pub use verify::{run_verification, Check, VerifyReport};

use crate::channel::ChannelError;
use crate::estimators::EstimatorError;
use crate::nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{what} mismatch: expected {expected}, got {actual}")]
    Mismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("training diverged at epoch {epoch}, batch {batch} (loss {loss})")]
    Diverged { epoch: usize, batch: usize, loss: f64 },
    #[error("estimator {0} needs a trained checkpoint")]
    MissingCheckpoint(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
}
