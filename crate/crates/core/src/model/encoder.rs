use rand::Rng;

use super::attention::{FeatureMapAttention, SpatialAttention};
use crate::nn::{visit_child, Layer, LayerNorm, Linear, Mode, NnError, Parameterized, Relu, Role, Scalar, Tensor};

/// Feature-map attention, spatial attention, a two-layer feed-forward network
/// with a residual sum, then layer normalisation. Maps `[N, M, F]` to itself.
#[derive(Debug, Clone)]
pub struct Encoder<T: Scalar> {
    pub feature_attention: FeatureMapAttention<T>,
    pub spatial_attention: SpatialAttention<T>,
    pub fc1: Linear<T>,
    pub fc2: Linear<T>,
    pub norm: LayerNorm<T>,
    relu: Relu,
    trace: Option<EncoderTrace<T>>,
}

/// Intermediate tensors of one encoder pass.
#[derive(Debug, Clone)]
pub struct EncoderTrace<T: Scalar> {
    /// Output of feature-map attention.
    pub h2: Tensor<T>,
    /// Output of spatial attention.
    pub h3: Tensor<T>,
}

impl<T: Scalar> Encoder<T> {
    pub fn new<R: Rng + ?Sized>(
        antennas: usize,
        features: usize,
        heads: usize,
        ffn_hidden: usize,
        rng: &mut R,
    ) -> Result<Self, NnError> {
        Ok(Encoder {
            feature_attention: FeatureMapAttention::new(antennas, heads, rng)?,
            spatial_attention: SpatialAttention::new(features, heads, rng)?,
            fc1: Linear::new(features, ffn_hidden, rng),
            fc2: Linear::new(ffn_hidden, features, rng),
            norm: LayerNorm::new(features),
            relu: Relu::new(),
            trace: None,
        })
    }

    /// `H_2` and `H_3` of the last forward pass.
    pub fn trace(&self) -> Option<&EncoderTrace<T>> {
        self.trace.as_ref()
    }
}

impl<T: Scalar> Parameterized<T> for Encoder<T> {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, Role)) {
        visit_child("feature_attention", &mut self.feature_attention, f);
        visit_child("spatial_attention", &mut self.spatial_attention, f);
        visit_child("fc1", &mut self.fc1, f);
        visit_child("fc2", &mut self.fc2, f);
        visit_child("norm", &mut self.norm, f);
    }
}

impl<T: Scalar> Layer<T> for Encoder<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let h2 = self.feature_attention.forward(x, mode)?;
        let h3 = self.spatial_attention.forward(&h2, mode)?;
        let z = self.fc1.forward(&h3, mode)?;
        let z = self.relu.forward(&z, mode)?;
        let z = self.fc2.forward(&z, mode)?;
        let out = self.norm.forward(&h3.add(&z)?, mode)?;
        self.trace = Some(EncoderTrace { h2, h3 });
        Ok(out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let d = self.norm.backward(dy)?;
        let dz = self.fc2.backward(&d)?;
        let dz = self.relu.backward(&dz)?;
        let dz = self.fc1.backward(&dz)?;
        let dh3 = d.add(&dz)?;
        let dh2 = self.spatial_attention.backward(&dh3)?;
        self.feature_attention.backward(&dh2)
    }
}
