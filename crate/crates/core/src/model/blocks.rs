use rand::Rng;

use crate::nn::{visit_child, BatchNorm, Conv2d, Layer, Mode, NnError, Parameterized, Relu, Role, Scalar, Tensor};

/// 3×3 convolution followed by batch normalisation and, optionally, ReLU.
#[derive(Debug, Clone)]
pub struct ConvBlock<T: Scalar> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm<T>,
    relu: Option<Relu>,
}

impl<T: Scalar> ConvBlock<T> {
    pub const KERNEL: usize = 3;

    pub fn new<R: Rng + ?Sized>(c_in: usize, c_out: usize, activation: bool, rng: &mut R) -> Self {
        ConvBlock {
            conv: Conv2d::new(Self::KERNEL, c_in, c_out, rng),
            bn: BatchNorm::new(c_out),
            relu: activation.then(Relu::new),
        }
    }

    pub fn has_activation(&self) -> bool {
        self.relu.is_some()
    }

    /// Zeroes the convolution and the batch-norm affine so the block outputs zero.
    pub fn zero_output(&mut self) {
        self.conv.weight.fill(T::zero());
        self.conv.bias.fill(T::zero());
        self.bn.gamma.fill(T::zero());
        self.bn.beta.fill(T::zero());
    }
}

impl<T: Scalar> Parameterized<T> for ConvBlock<T> {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, Role)) {
        visit_child("conv", &mut self.conv, f);
        visit_child("bn", &mut self.bn, f);
    }
}

impl<T: Scalar> Layer<T> for ConvBlock<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let y = self.conv.forward(x, mode)?;
        let y = self.bn.forward(&y, mode)?;
        match &mut self.relu {
            Some(r) => r.forward(&y, mode),
            None => Ok(y),
        }
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let d = match &mut self.relu {
            Some(r) => r.backward(dy)?,
            None => dy.clone(),
        };
        let d = self.bn.backward(&d)?;
        self.conv.backward(&d)
    }
}
