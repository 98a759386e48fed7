use super::{Layer, Mode, NnError, Parameterized, Role, Scalar, Tensor};

/// Per-token normalisation over the last axis followed by a learned affine map.
#[derive(Debug, Clone)]
pub struct LayerNorm<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub eps: f64,
    cache: Option<(Vec<T>, Vec<T>)>,
}

impl<T: Scalar> LayerNorm<T> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Tensor::param(&[dim], vec![T::one(); dim]),
            beta: Tensor::param(&[dim], vec![T::zero(); dim]),
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.gamma.len()
    }
}

impl<T: Scalar> Parameterized<T> for LayerNorm<T> {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, Role)) {
        f("gamma", &mut self.gamma, Role::Trainable);
        f("beta", &mut self.beta, Role::Trainable);
    }
}

impl<T: Scalar> Layer<T> for LayerNorm<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>, NnError> {
        let d = self.dim();
        if x.shape().last() != Some(&d) {
            return Err(NnError::Shape(format!("layernorm expects last axis {d}, got {:?}", x.shape())));
        }
        let inv_d = T::one() / T::of(d as f64);
        let eps = T::of(self.eps);
        let mut xhat = Vec::with_capacity(x.len());
        let mut inv_std = Vec::with_capacity(x.len() / d);
        let mut out = Vec::with_capacity(x.len());
        let (g, b) = (self.gamma.data(), self.beta.data());
        for row in x.data().chunks_exact(d) {
            let mean = row.iter().copied().sum::<T>() * inv_d;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_d;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            for i in 0..d {
                let z = (row[i] - mean) * is;
                xhat.push(z);
                out.push(g[i] * z + b[i]);
            }
        }
        self.cache = Some((xhat, inv_std));
        Tensor::from_vec(x.shape(), out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (xhat, inv_std) = self.cache.as_ref().ok_or(NnError::NoCache("layernorm"))?;
        let d = self.gamma.len();
        if dy.len() != xhat.len() {
            return Err(NnError::Shape("layernorm backward: gradient size differs from input".into()));
        }
        {
            let (_, gg) = self.gamma.value_and_grad_mut();
            for (row, xr) in dy.data().chunks_exact(d).zip(xhat.chunks_exact(d)) {
                for i in 0..d {
                    gg[i] += row[i] * xr[i];
                }
            }
            let (_, bg) = self.beta.value_and_grad_mut();
            for row in dy.data().chunks_exact(d) {
                bg.iter_mut().zip(row).for_each(|(g, &v)| *g += v);
            }
        }
        let gamma = self.gamma.data();
        let inv_d = T::one() / T::of(d as f64);
        let mut dx = Vec::with_capacity(dy.len());
        for ((row, xr), &is) in dy.data().chunks_exact(d).zip(xhat.chunks_exact(d)).zip(inv_std) {
            let mut s1 = T::zero();
            let mut s2 = T::zero();
            for i in 0..d {
                let g = row[i] * gamma[i];
                s1 += g;
                s2 += g * xr[i];
            }
            for i in 0..d {
                let g = row[i] * gamma[i];
                dx.push(is * (g - inv_d * s1 - xr[i] * inv_d * s2));
            }
        }
        Tensor::from_vec(dy.shape(), dx)
    }
}
