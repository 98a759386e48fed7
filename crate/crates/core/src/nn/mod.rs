//! Dense tensor kernel with explicit reverse-mode backward passes.
//!
//! Image-like tensors use `[N, H, W, C]` layout, token sequences use
//! `[N, tokens, features]`. Every layer caches what its backward pass needs
//! during `forward` and accumulates parameter gradients into the gradient
//! buffers of its [`Tensor`]s during `backward`.

mod activation;
mod adam;
mod attention;
mod batchnorm;
mod checkpoint;
mod conv;
pub mod gradcheck;
mod layernorm;
mod linalg;
mod linear;
mod scalar;
mod tensor;

pub use activation::{relu, softmax, softmax_backward, Relu};
pub use adam::{AdamConfig, AdamState};
pub use attention::{
    scaled_dot_product_attention, scaled_dot_product_attention_backward, AttentionConfig, AttentionOutput,
    MultiHeadAttention,
};
pub use batchnorm::BatchNorm;
pub use checkpoint::{read_checkpoint, read_checkpoint_from, write_checkpoint, write_checkpoint_to, Checkpoint, CheckpointEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use conv::Conv2d;
pub use layernorm::LayerNorm;
pub use linalg::{gemm, gemm_serial, matmul, MatMut, MatRef};
pub use linear::Linear;
pub use scalar::Scalar;
pub use tensor::Tensor;

/// Errors raised by the tensor kernel.
#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("batch normalisation needs at least 2 values per channel in train mode, got {0}")]
    BatchTooSmall(usize),
    #[error("backward called before forward on {0}")]
    NoCache(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

/// Whether batch normalisation uses batch statistics or running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Role of a tensor exposed through [`Parameterized::visit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Updated by the optimiser.
    Trainable,
    /// Persistent state that is not trained (batch-norm running statistics).
    Buffer,
}

/// Anything that owns named tensors.
pub trait Parameterized<T: Scalar> {
    /// Calls `f` on every owned tensor in a fixed order.
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, Role));

    fn zero_grad(&mut self) {
        self.visit(&mut |_, t, _| t.zero_grad());
    }

    /// Number of scalar values, trainable and buffers.
    fn tensor_sizes(&mut self) -> (usize, usize) {
        let (mut tr, mut buf) = (0, 0);
        self.visit(&mut |_, t, r| match r {
            Role::Trainable => tr += t.len(),
            Role::Buffer => buf += t.len(),
        });
        (tr, buf)
    }
}

/// A differentiable map from one tensor to another.
pub trait Layer<T: Scalar>: Parameterized<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError>;

    /// Propagates `dy` to the input, accumulating parameter gradients.
    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError>;
}

/// Forwards `child`'s tensors to `f` under `prefix.`.
pub fn visit_child<T: Scalar, P: Parameterized<T> + ?Sized>(
    prefix: &str,
    child: &mut P,
    f: &mut dyn FnMut(&str, &mut Tensor<T>, Role),
) {
    child.visit(&mut |name, t, role| f(&format!("{prefix}.{name}"), t, role));
}

/// Glorot/Xavier uniform bound `√(6 / (fan_in + fan_out))`.
pub fn xavier_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
