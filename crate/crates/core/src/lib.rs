//! Hybrid near/far-field XL-MIMO uplink channel estimation laboratory.
//!
//! The crate is organised in layers:
//!
//! * [`channel`]: array geometry, steering vectors, hybrid-field channel
//!   synthesis, the uplink pilot model, LS preprocessing and the binary
//!   dataset format.
//! * [`nn`]: a small dense-tensor kernel with hand-written backward passes
//!   (convolution, batch/layer normalisation, attention, Adam) and the
//!   weight checkpoint format.
//! * [`model`]: the mixed-attention estimator network, the all-convolutional
//!   baseline network and the parameter/FLOP counter.
//! * [`estimators`]: LMMSE with an empirical covariance and (hybrid-field)
//!   orthogonal matching pursuit.
//! * [`harness`]: datasets, training, NMSE evaluation, experiment sweeps and
//!   the built-in verification suite.
//!
//! Heavy inner loops (matrix products, per-sample attention, batch
//! evaluation) run on rayon when the `parallel` feature is enabled. Work is
//! always split into fixed-size chunks and reduced in a fixed order, so
//! parallel and sequential runs agree bit for bit.

pub mod channel;
pub mod estimators;
pub mod harness;
pub mod model;
pub mod nn;
pub mod par;
pub mod rng;

pub use num_complex::Complex64;
