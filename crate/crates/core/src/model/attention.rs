use rand::Rng;

use crate::nn::{AttentionConfig, Layer, Mode, MultiHeadAttention, NnError, Parameterized, Role, Scalar, Tensor};

/// Attention across feature maps: the `F` columns of an `[N, M, F]` input
/// act as tokens of width `M`, giving `F × F` weights per head. The result is
/// transposed back and added to the input.
#[derive(Debug, Clone)]
pub struct FeatureMapAttention<T: Scalar> {
    pub mha: MultiHeadAttention<T>,
}

impl<T: Scalar> FeatureMapAttention<T> {
    pub fn new<R: Rng + ?Sized>(antennas: usize, heads: usize, rng: &mut R) -> Result<Self, NnError> {
        Ok(FeatureMapAttention {
            mha: MultiHeadAttention::new(AttentionConfig::new(antennas, heads)?, rng),
        })
    }

    /// `E`, shaped `[N, heads, F, F]`, from the last forward pass.
    pub fn weights(&self) -> Option<Tensor<T>> {
        self.mha.attention_weights()
    }
}

impl<T: Scalar> Parameterized<T> for FeatureMapAttention<T> {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, Role)) {
        crate::nn::visit_child("mha", &mut self.mha, f);
    }
}

impl<T: Scalar> Layer<T> for FeatureMapAttention<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        if x.shape().len() != 3 {
            return Err(NnError::Shape(format!("feature attention expects [N, M, F], got {:?}", x.shape())));
        }
        let y = self.mha.forward(&x.transpose_last2(), mode)?;
        x.add(&y.transpose_last2())
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let d = self.mha.backward(&dy.transpose_last2())?;
        dy.add(&d.transpose_last2())
    }
}

/// Attention across spatial positions: the `M` rows of an `[N, M, F]` input
/// act as tokens of width `F`, giving `M × M` weights per head. In the
/// transposed view this maps `S_in = Xᵀ` to `S_out`, whose transpose is added
/// to the input.
#[derive(Debug, Clone)]
pub struct SpatialAttention<T: Scalar> {
    pub mha: MultiHeadAttention<T>,
    s_out: Option<Tensor<T>>,
}

impl<T: Scalar> SpatialAttention<T> {
    pub fn new<R: Rng + ?Sized>(features: usize, heads: usize, rng: &mut R) -> Result<Self, NnError> {
        Ok(SpatialAttention {
            mha: MultiHeadAttention::new(AttentionConfig::new(features, heads)?, rng),
            s_out: None,
        })
    }

    /// `B`, shaped `[N, heads, M, M]`, from the last forward pass.
    pub fn weights(&self) -> Option<Tensor<T>> {
        self.mha.attention_weights()
    }

    /// Attention output before the residual sum, in the `[N, F, M]` layout.
    pub fn s_out(&self) -> Option<&Tensor<T>> {
        self.s_out.as_ref()
    }
}

impl<T: Scalar> Parameterized<T> for SpatialAttention<T> {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, Role)) {
        crate::nn::visit_child("mha", &mut self.mha, f);
    }
}

impl<T: Scalar> Layer<T> for SpatialAttention<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        if x.shape().len() != 3 {
            return Err(NnError::Shape(format!("spatial attention expects [N, M, F], got {:?}", x.shape())));
        }
        let y = self.mha.forward(x, mode)?;
        let out = x.add(&y)?;
        self.s_out = Some(y.transpose_last2());
        Ok(out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let d = self.mha.backward(dy)?;
        dy.add(&d)
    }
}
