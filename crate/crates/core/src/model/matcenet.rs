use rand::Rng;

use super::blocks::ConvBlock;
use super::encoder::Encoder;
use crate::nn::{visit_child, Layer, Mode, NnError, Parameterized, Role, Scalar, Tensor};

/// Width and head settings of MAT-CENet.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatCenetConfig {
    /// `M`, a perfect square.
    pub antennas: usize,
    /// `F`, feature maps per convolution and token width of the encoders.
    pub features: usize,
    /// `h`, heads in both attention modules; must divide `M` and `F`.
    pub heads: usize,
    pub ffn_hidden: usize,
}

impl MatCenetConfig {
    pub const N_ENCODERS: usize = 2;
    pub const N_FRONT_CONV: usize = 4;

    /// `F = 64`, `h = 4`, `ffn_hidden = 4F`.
    pub fn new(antennas: usize) -> Self {
        Self::with_width(antennas, 64)
    }

    pub fn with_width(antennas: usize, features: usize) -> Self {
        MatCenetConfig {
            antennas,
            features,
            heads: 4,
            ffn_hidden: 4 * features,
        }
    }

    pub fn validate(&self) -> Result<usize, NnError> {
        let side = crate::channel::square_side(self.antennas)
            .ok_or_else(|| NnError::Config(format!("antenna count {} is not a perfect square", self.antennas)))?;
        if self.features == 0 || self.ffn_hidden == 0 || self.heads == 0 {
            return Err(NnError::Config("features, heads and ffn_hidden must be positive".into()));
        }
        if self.antennas % self.heads != 0 || self.features % self.heads != 0 {
            return Err(NnError::Config(format!(
                "head count {} must divide both M = {} and F = {}",
                self.heads, self.antennas, self.features
            )));
        }
        Ok(side)
    }
}

/// Every intermediate tensor of one MAT-CENet pass, batch-first.
///
/// Attention weights come from the first encoder.
#[derive(Debug, Clone)]
pub struct MatCenetActivations<T: Scalar> {
    pub h_input: Tensor<T>,
    /// `[N, √M, √M, F]`.
    pub h0: Tensor<T>,
    /// `[N, M, F]` for `h1` through `h5`.
    pub h1: Tensor<T>,
    pub h2: Tensor<T>,
    pub h3: Tensor<T>,
    pub h4: Tensor<T>,
    pub h5: Tensor<T>,
    /// `[N, √M, √M, F]`.
    pub h6: Tensor<T>,
    /// `[N, √M, √M, 2]`.
    pub h7: Tensor<T>,
    pub h_output: Tensor<T>,
    /// `E`, `[N, h, F, F]`.
    pub feature_weights: Tensor<T>,
    /// `B`, `[N, h, M, M]`.
    pub spatial_weights: Tensor<T>,
    /// `[N, F, M]`.
    pub s_in: Tensor<T>,
    pub s_out: Tensor<T>,
}

/// Convolutional front end, two attention encoders and a residual tail:
/// `H_output = H_input − H_7`.
#[derive(Debug, Clone)]
pub struct MatCenet<T: Scalar> {
    pub cfg: MatCenetConfig,
    pub front: Vec<ConvBlock<T>>,
    pub encoders: Vec<Encoder<T>>,
    pub tail: ConvBlock<T>,
    side: usize,
}

impl<T: Scalar> MatCenet<T> {
    pub fn new<R: Rng + ?Sized>(cfg: MatCenetConfig, rng: &mut R) -> Result<Self, NnError> {
        let side = cfg.validate()?;
        let f = cfg.features;
        let front = (0..MatCenetConfig::N_FRONT_CONV)
            .map(|i| ConvBlock::new(if i == 0 { 2 } else { f }, f, true, rng))
            .collect();
        let encoders = (0..MatCenetConfig::N_ENCODERS)
            .map(|_| Encoder::new(cfg.antennas, f, cfg.heads, cfg.ffn_hidden, rng))
            .collect::<Result<_, _>>()?;
        // The last batch-norm scale starts at zero, so an untrained network
        // returns its input (the LS estimate) exactly.
        let mut tail = ConvBlock::new(f, 2, false, rng);
        tail.bn.gamma.fill(T::zero());
        Ok(MatCenet {
            cfg,
            front,
            encoders,
            tail,
            side,
        })
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize, NnError> {
        match x.shape() {
            &[n, a, b, 2] if a == self.side && b == self.side => Ok(n),
            s => Err(NnError::Shape(format!(
                "MAT-CENet expects [N, {s0}, {s0}, 2], got {s:?}",
                s0 = self.side
            ))),
        }
    }

    /// Forward pass that also returns every intermediate tensor.
    pub fn forward_traced(&mut self, x: &Tensor<T>, mode: Mode) -> Result<(Tensor<T>, MatCenetActivations<T>), NnError> {
        let n = self.check_input(x)?;
        let (m, f, s) = (self.cfg.antennas, self.cfg.features, self.side);
        let mut h = x.clone();
        for block in &mut self.front {
            h = block.forward(&h, mode)?;
        }
        let h0 = h;
        let h1 = h0.clone().reshape(&[n, m, f])?;
        let h4 = self.encoders[0].forward(&h1, mode)?;
        let h5 = self.encoders[1].forward(&h4, mode)?;
        let h6 = h5.clone().reshape(&[n, s, s, f])?;
        let h7 = self.tail.forward(&h6, mode)?;
        let out = x.sub(&h7)?;

        let enc = &self.encoders[0];
        let trace = enc.trace().ok_or(NnError::NoCache("encoder trace"))?;
        let missing = || NnError::NoCache("attention weights");
        let acts = MatCenetActivations {
            h_input: x.clone(),
            h0,
            h1,
            h2: trace.h2.clone(),
            h3: trace.h3.clone(),
            h4,
            h5,
            h6,
            h7,
            h_output: out.clone(),
            feature_weights: enc.feature_attention.weights().ok_or_else(missing)?,
            spatial_weights: enc.spatial_attention.weights().ok_or_else(missing)?,
            s_in: trace.h2.transpose_last2(),
            s_out: enc.spatial_attention.s_out().ok_or_else(missing)?.clone(),
        };
        Ok((out, acts))
    }
}

impl<T: Scalar> Parameterized<T> for MatCenet<T> {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, Role)) {
        for (i, b) in self.front.iter_mut().enumerate() {
            visit_child(&format!("conv{}", i + 1), b, f);
        }
        for (i, e) in self.encoders.iter_mut().enumerate() {
            visit_child(&format!("encoder{}", i + 1), e, f);
        }
        visit_child("tail", &mut self.tail, f);
    }
}

impl<T: Scalar> Layer<T> for MatCenet<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let n = self.check_input(x)?;
        let (m, f, s) = (self.cfg.antennas, self.cfg.features, self.side);
        let mut h = x.clone();
        for block in &mut self.front {
            h = block.forward(&h, mode)?;
        }
        let mut h = h.reshape(&[n, m, f])?;
        for enc in &mut self.encoders {
            h = enc.forward(&h, mode)?;
        }
        let h7 = self.tail.forward(&h.reshape(&[n, s, s, f])?, mode)?;
        x.sub(&h7)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let n = self.check_input(dy)?;
        let (m, f, s) = (self.cfg.antennas, self.cfg.features, self.side);
        let d = self.tail.backward(&dy.map(|v| -v))?;
        let mut d = d.reshape(&[n, m, f])?;
        for enc in self.encoders.iter_mut().rev() {
            d = enc.backward(&d)?;
        }
        let mut d = d.reshape(&[n, s, s, f])?;
        for block in self.front.iter_mut().rev() {
            d = block.backward(&d)?;
        }
        dy.add(&d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn tiny() -> MatCenetConfig {
        MatCenetConfig {
            antennas: 16,
            features: 8,
            heads: 2,
            ffn_hidden: 16,
        }
    }

    #[test]
    fn config_validation() {
        assert!(MatCenetConfig::new(256).validate().is_ok());
        assert!(MatCenetConfig::new(200).validate().is_err());
        let mut c = tiny();
        c.heads = 3;
        assert!(c.validate().is_err());
        c.heads = 8;
        c.antennas = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn activation_shapes() {
        let mut net = MatCenet::<f64>::new(tiny(), &mut rng(1)).unwrap();
        let x = Tensor::<f64>::uniform(&[3, 4, 4, 2], 1.0, &mut rng(2));
        let (y, a) = net.forward_traced(&x, Mode::Train).unwrap();
        assert_eq!(y.shape(), &[3, 4, 4, 2]);
        assert_eq!(a.h0.shape(), &[3, 4, 4, 8]);
        for t in [&a.h1, &a.h2, &a.h3, &a.h4, &a.h5] {
            assert_eq!(t.shape(), &[3, 16, 8]);
        }
        assert_eq!(a.h6.shape(), &[3, 4, 4, 8]);
        assert_eq!(a.h7.shape(), &[3, 4, 4, 2]);
        assert_eq!(a.feature_weights.shape(), &[3, 2, 8, 8]);
        assert_eq!(a.spatial_weights.shape(), &[3, 2, 16, 16]);
        assert_eq!(a.s_in.shape(), &[3, 8, 16]);
        assert_eq!(a.s_out.shape(), &[3, 8, 16]);
        for (w, n) in [(&a.feature_weights, 8), (&a.spatial_weights, 16)] {
            for row in w.data().chunks(n) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
        let y2 = net.forward(&x, Mode::Train).unwrap();
        assert_eq!(y.data(), y2.data());
    }

    #[test]
    fn zeroed_tail_is_identity() {
        let mut net = MatCenet::<f64>::new(tiny(), &mut rng(3)).unwrap();
        net.tail.zero_output();
        let x = Tensor::<f64>::uniform(&[2, 4, 4, 2], 1.0, &mut rng(4));
        for mode in [Mode::Train, Mode::Infer] {
            assert_eq!(net.forward(&x, mode).unwrap().data(), x.data());
        }
    }

    #[test]
    fn untrained_network_returns_its_input() {
        let mut net = MatCenet::<f64>::new(tiny(), &mut rng(9)).unwrap();
        let x = Tensor::<f64>::uniform(&[2, 4, 4, 2], 1.0, &mut rng(10));
        assert_eq!(net.forward(&x, Mode::Train).unwrap().data(), x.data());
    }

    #[test]
    fn wrong_input_shape_rejected() {
        let mut net = MatCenet::<f64>::new(tiny(), &mut rng(5)).unwrap();
        let x = Tensor::<f64>::zeros(&[1, 8, 2, 2]);
        assert!(net.forward(&x, Mode::Infer).is_err());
    }

    #[test]
    fn end_to_end_gradient_check() {
        let mut net = MatCenet::<f64>::new(tiny(), &mut rng(6)).unwrap();
        net.tail.bn.gamma.data_mut().copy_from_slice(&[0.8, -1.3]);
        let x = Tensor::<f64>::uniform(&[2, 4, 4, 2], 1.0, &mut rng(7));
        let rep = crate::nn::gradcheck::check_layer(&mut net, &x, Mode::Train, 8, 1e-3).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }
}
