//! Classical channel estimators: LS, LMMSE with an empirical covariance, and
//! orthogonal matching pursuit over angular and polar dictionaries.

mod covariance;
mod dictionary;
mod lmmse;
mod omp;

pub use crate::channel::ls_estimate;
pub use covariance::{
    fit_covariance, read_covariance, read_covariance_from, write_covariance, write_covariance_to, CovarianceModel,
    COVARIANCE_MAGIC,
};
pub use dictionary::{build_dictionary, default_distance_rings, write_dictionary_csv, AtomKind, AtomMeta, Dictionary};
pub use lmmse::{lmmse_estimate, LmmseFilter};
pub use omp::{hybrid_omp, omp, omp_restricted, OmpResult};

use crate::channel::ChannelError;

#[derive(Debug, thiserror::Error)]
pub enum EstimatorError {
    #[error("no samples to fit")]
    EmptySamples,
    #[error("expected {expected} antennas, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("linear system is singular even after regularisation")]
    Singular,
    #[error("sparsity {k} exceeds the {available} available atoms")]
    InvalidSparsity { k: usize, available: usize },
    #[error("dictionary grid is empty")]
    EmptyGrid,
    #[error("covariance file: {0}")]
    Format(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Channel(#[from] ChannelError),
}
