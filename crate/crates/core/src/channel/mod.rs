//! Hybrid-field XL-MIMO channel model.
//!
//! A uniform linear array of `M` antennas receives `L` propagation paths,
//! `L0` of them planar (far field) and the rest spherical (near field). The
//! module covers path sampling, steering vectors, channel synthesis, the
//! single-pilot uplink observation, LS preprocessing, packing into the
//! `(√M, √M, 2)` real tensor consumed by the networks, and the binary
//! dataset format.

mod array;
mod format;
mod paths;
mod signal;
mod steering;
mod tensor;

pub use array::{rayleigh_distance, ArrayConfig};
pub(crate) use array::square_side;
pub use format::{
    read_dataset, read_dataset_from, write_channel_csv, write_dataset, write_dataset_to, ChannelDataset,
    ChannelSample, DATASET_MAGIC, DATASET_VERSION,
};
pub use paths::{generate_channel, sample_paths, ChannelConfig, FieldKind, PathParams};
pub use signal::{ls_estimate, received_signal, SignalConfig};
pub use steering::{far_field_steering, near_field_steering};
pub use tensor::{pack_real, unpack_real, RealTensor};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Errors raised by the channel model.
#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("invalid array configuration: {0}")]
    InvalidArray(String),
    #[error("invalid path parameters: {0}")]
    InvalidPath(String),
    #[error("invalid channel configuration: {0}")]
    InvalidConfig(String),
    #[error("antenna count {0} is not a perfect square")]
    NotSquare(usize),
    #[error("channel needs at least one path")]
    EmptyPaths,
    #[error("pilot power must be positive, got {0}")]
    InvalidPower(f64),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("malformed dataset: {0}")]
    Format(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

/// A length-`M` complex channel (or observation) vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexChannel(pub Vec<Complex64>);

impl ComplexChannel {
    pub fn zeros(m: usize) -> Self {
        ComplexChannel(vec![Complex64::new(0.0, 0.0); m])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    /// Squared Euclidean norm.
    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `‖self − other‖²`.
    pub fn distance_sqr(&self, other: &ComplexChannel) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| (a - b).norm_sqr()).sum()
    }

    pub fn scale(&self, s: f64) -> ComplexChannel {
        ComplexChannel(self.0.iter().map(|z| z * s).collect())
    }
}

impl From<Vec<Complex64>> for ComplexChannel {
    fn from(v: Vec<Complex64>) -> Self {
        ComplexChannel(v)
    }
}

/// Draws a circularly-symmetric complex Gaussian with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}
