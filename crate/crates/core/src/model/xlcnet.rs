use rand::Rng;

use super::blocks::ConvBlock;
use crate::nn::{visit_child, Layer, Mode, NnError, Parameterized, Role, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct XlcnetConfig {
    pub antennas: usize,
    /// Filters in each of the eight hidden convolutions.
    pub features: usize,
}

impl XlcnetConfig {
    pub const N_HIDDEN_CONV: usize = 8;

    pub fn new(antennas: usize) -> Self {
        XlcnetConfig { antennas, features: 64 }
    }

    pub fn validate(&self) -> Result<usize, NnError> {
        if self.features == 0 {
            return Err(NnError::Config("features must be positive".into()));
        }
        crate::channel::square_side(self.antennas)
            .ok_or_else(|| NnError::Config(format!("antenna count {} is not a perfect square", self.antennas)))
    }
}

/// Plain convolutional baseline: eight conv+BN+ReLU blocks, a two-filter
/// conv+BN, and the same residual subtraction as MAT-CENet.
#[derive(Debug, Clone)]
pub struct Xlcnet<T: Scalar> {
    pub cfg: XlcnetConfig,
    pub blocks: Vec<ConvBlock<T>>,
    pub tail: ConvBlock<T>,
    side: usize,
}

impl<T: Scalar> Xlcnet<T> {
    pub fn new<R: Rng + ?Sized>(cfg: XlcnetConfig, rng: &mut R) -> Result<Self, NnError> {
        let side = cfg.validate()?;
        let f = cfg.features;
        let blocks = (0..XlcnetConfig::N_HIDDEN_CONV)
            .map(|i| ConvBlock::new(if i == 0 { 2 } else { f }, f, true, rng))
            .collect();
        let mut tail = ConvBlock::new(f, 2, false, rng);
        tail.bn.gamma.fill(T::zero());
        Ok(Xlcnet { cfg, blocks, tail, side })
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<(), NnError> {
        match x.shape() {
            &[_, a, b, 2] if a == self.side && b == self.side => Ok(()),
            s => Err(NnError::Shape(format!(
                "XLCNet expects [N, {s0}, {s0}, 2], got {s:?}",
                s0 = self.side
            ))),
        }
    }
}

impl<T: Scalar> Parameterized<T> for Xlcnet<T> {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, Role)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            visit_child(&format!("conv{}", i + 1), b, f);
        }
        visit_child("tail", &mut self.tail, f);
    }
}

impl<T: Scalar> Layer<T> for Xlcnet<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        self.check_input(x)?;
        let mut h = x.clone();
        for b in &mut self.blocks {
            h = b.forward(&h, mode)?;
        }
        let h = self.tail.forward(&h, mode)?;
        x.sub(&h)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.check_input(dy)?;
        let mut d = self.tail.backward(&dy.map(|v| -v))?;
        for b in self.blocks.iter_mut().rev() {
            d = b.backward(&d)?;
        }
        dy.add(&d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn full_scale_parameter_count() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut net = Xlcnet::<f32>::new(XlcnetConfig::new(256), &mut rng).unwrap();
        let (trainable, buffers) = net.tensor_sizes();
        // Conv weights and biases, then BN gamma/beta plus running statistics.
        let conv = 9 * 2 * 64 + 64 + 7 * (9 * 64 * 64 + 64) + 9 * 64 * 2 + 2;
        assert_eq!(trainable, conv + 2 * (8 * 64 + 2));
        assert_eq!(trainable + buffers, 262_922);
    }

    #[test]
    fn untrained_network_returns_its_input() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let mut net = Xlcnet::<f64>::new(XlcnetConfig { antennas: 16, features: 3 }, &mut rng).unwrap();
        let x = Tensor::<f64>::uniform(&[3, 4, 4, 2], 1.0, &mut rng);
        assert_eq!(net.forward(&x, Mode::Train).unwrap().data(), x.data());
    }

    #[test]
    fn zeroed_tail_is_identity_and_shape_preserved() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut net = Xlcnet::<f64>::new(XlcnetConfig { antennas: 16, features: 4 }, &mut rng).unwrap();
        let x = Tensor::<f64>::uniform(&[2, 4, 4, 2], 1.0, &mut rng);
        let y = net.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.shape(), x.shape());
        net.tail.zero_output();
        assert_eq!(net.forward(&x, Mode::Infer).unwrap().data(), x.data());
    }

    #[test]
    fn gradient_check() {
        // Seed chosen so no ReLU input sits within a difference step of its kink.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut net = Xlcnet::<f64>::new(XlcnetConfig { antennas: 16, features: 3 }, &mut rng).unwrap();
        net.tail.bn.gamma.data_mut().copy_from_slice(&[0.8, -1.3]);
        let x = Tensor::<f64>::uniform(&[2, 4, 4, 2], 1.0, &mut rng);
        let rep = crate::nn::gradcheck::check_layer(&mut net, &x, Mode::Train, 3, 1e-3).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }
}
