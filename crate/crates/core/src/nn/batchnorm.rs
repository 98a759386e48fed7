use super::{Layer, Mode, NnError, Parameterized, Role, Scalar, Tensor};

/// Batch normalisation over the last (channel) axis.
///
/// Train mode normalises with the biased batch variance and updates the
/// running estimates as `running ← momentum·running + (1 − momentum)·batch`
/// (the running variance uses the unbiased batch variance). Infer mode
/// normalises with the running estimates.
#[derive(Debug, Clone)]
pub struct BatchNorm<T: Scalar> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub running_mean: Tensor<T>,
    pub running_var: Tensor<T>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mode: Mode,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: Tensor::param(&[channels], vec![T::one(); channels]),
            beta: Tensor::param(&[channels], vec![T::zero(); channels]),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::from_vec(&[channels], vec![T::one(); channels]).expect("shape"),
            momentum: 0.9,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    fn batch_stats(&self, x: &[T], c: usize) -> (Vec<T>, Vec<T>) {
        let count = T::of((x.len() / c) as f64);
        let mut mean = vec![T::zero(); c];
        for row in x.chunks_exact(c) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= count);
        let mut var = vec![T::zero(); c];
        for row in x.chunks_exact(c) {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v - m;
                *s += d * d;
            }
        }
        var.iter_mut().for_each(|s| *s /= count);
        (mean, var)
    }
}

impl<T: Scalar> Parameterized<T> for BatchNorm<T> {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, Role)) {
        f("gamma", &mut self.gamma, Role::Trainable);
        f("beta", &mut self.beta, Role::Trainable);
        f("running_mean", &mut self.running_mean, Role::Buffer);
        f("running_var", &mut self.running_var, Role::Buffer);
    }
}

impl<T: Scalar> Layer<T> for BatchNorm<T> {
    fn forward(&mut self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>, NnError> {
        let c = self.channels();
        if x.shape().last() != Some(&c) {
            return Err(NnError::Shape(format!("batchnorm expects {c} channels, got {:?}", x.shape())));
        }
        let xs = x.data();
        let count = xs.len() / c;
        let eps = T::of(self.eps);
        let (mean, var) = match mode {
            Mode::Train => {
                if count < 2 {
                    return Err(NnError::BatchTooSmall(count));
                }
                let (mean, var) = self.batch_stats(xs, c);
                let mom = T::of(self.momentum);
                let unbias = T::of(count as f64 / (count as f64 - 1.0));
                for i in 0..c {
                    let rm = &mut self.running_mean.data_mut()[i];
                    *rm = mom * *rm + (T::one() - mom) * mean[i];
                    let rv = &mut self.running_var.data_mut()[i];
                    *rv = mom * *rv + (T::one() - mom) * var[i] * unbias;
                }
                (mean, var)
            }
            Mode::Infer => (self.running_mean.data().to_vec(), self.running_var.data().to_vec()),
        };
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = Vec::with_capacity(xs.len());
        let mut out = Vec::with_capacity(xs.len());
        let (g, b) = (self.gamma.data(), self.beta.data());
        for row in xs.chunks_exact(c) {
            for i in 0..c {
                let z = (row[i] - mean[i]) * inv_std[i];
                xhat.push(z);
                out.push(g[i] * z + b[i]);
            }
        }
        self.cache = Some(BnCache { xhat, inv_std, mode });
        Tensor::from_vec(x.shape(), out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoCache("batchnorm"))?;
        let c = self.gamma.len();
        if dy.len() != cache.xhat.len() {
            return Err(NnError::Shape("batchnorm backward: gradient size differs from input".into()));
        }
        let dys = dy.data();
        let mut sum_dy = vec![T::zero(); c];
        let mut sum_dy_xhat = vec![T::zero(); c];
        for (row, xr) in dys.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
            for i in 0..c {
                sum_dy[i] += row[i];
                sum_dy_xhat[i] += row[i] * xr[i];
            }
        }
        {
            let (_, gg) = self.gamma.value_and_grad_mut();
            gg.iter_mut().zip(&sum_dy_xhat).for_each(|(g, &s)| *g += s);
            let (_, bg) = self.beta.value_and_grad_mut();
            bg.iter_mut().zip(&sum_dy).for_each(|(g, &s)| *g += s);
        }
        let gamma = self.gamma.data();
        let mut dx = Vec::with_capacity(dys.len());
        match cache.mode {
            Mode::Train => {
                let inv_n = T::one() / T::of((dys.len() / c) as f64);
                for (row, xr) in dys.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
                    for i in 0..c {
                        let k = gamma[i] * cache.inv_std[i];
                        dx.push(k * (row[i] - inv_n * sum_dy[i] - xr[i] * inv_n * sum_dy_xhat[i]));
                    }
                }
            }
            Mode::Infer => {
                for row in dys.chunks_exact(c) {
                    for i in 0..c {
                        dx.push(row[i] * gamma[i] * cache.inv_std[i]);
                    }
                }
            }
        }
        Tensor::from_vec(dy.shape(), dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_layer;
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn train_output_is_standardised() {
        let mut bn = BatchNorm::<f64>::new(3);
        let x = Tensor::<f64>::uniform(&[4, 2, 2, 3], 7.0, &mut rng(1)).map(|v| v + 3.0);
        let y = bn.forward(&x, Mode::Train).unwrap();
        for ch in 0..3 {
            let vals: Vec<f64> = y.data().iter().skip(ch).step_by(3).copied().collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-6);
            // Variance is 1 up to the ε in the denominator.
            let raw: Vec<f64> = x.data().iter().skip(ch).step_by(3).copied().collect();
            let rm = raw.iter().sum::<f64>() / n;
            let rv = raw.iter().map(|v| (v - rm).powi(2)).sum::<f64>() / n;
            assert!((var - rv / (rv + 1e-5)).abs() < 1e-6, "{var}");
            assert!((var - 1.0).abs() < 1e-5);
        }
    }

    #[test]
    fn standardised_input_passes_through() {
        let mut bn = BatchNorm::<f64>::new(1);
        let x = Tensor::from_vec(&[4, 1], vec![-1.0, 1.0, -1.0, 1.0]).unwrap();
        let y = bn.forward(&x, Mode::Train).unwrap();
        for (a, b) in y.data().iter().zip(x.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn running_statistics_update() {
        let mut bn = BatchNorm::<f64>::new(1);
        let x = Tensor::from_vec(&[2, 1], vec![1.0, 3.0]).unwrap();
        bn.forward(&x, Mode::Train).unwrap();
        assert!((bn.running_mean.data()[0] - 0.2).abs() < 1e-12);
        // Unbiased variance of {1, 3} is 2.
        assert!((bn.running_var.data()[0] - (0.9 + 0.1 * 2.0)).abs() < 1e-12);
        let y = bn.forward(&x, Mode::Infer).unwrap();
        let s = (1.1f64 + 1e-5).sqrt();
        assert!((y.data()[0] - (1.0 - 0.2) / s).abs() < 1e-12);
    }

    #[test]
    fn train_mode_needs_two_values_per_channel() {
        let mut bn = BatchNorm::<f64>::new(2);
        let x = Tensor::<f64>::zeros(&[1, 1, 1, 2]);
        assert!(matches!(bn.forward(&x, Mode::Train), Err(NnError::BatchTooSmall(1))));
        assert!(bn.forward(&x, Mode::Infer).is_ok());
    }

    #[test]
    fn gradient_check_both_modes() {
        let mut bn = BatchNorm::<f64>::new(3);
        bn.gamma.data_mut().copy_from_slice(&[1.5, -0.7, 0.3]);
        bn.beta.data_mut().copy_from_slice(&[0.2, 0.0, -1.0]);
        let x = Tensor::<f64>::uniform(&[3, 2, 2, 3], 2.0, &mut rng(2));
        let rep = check_layer(&mut bn, &x, Mode::Train, 3, 1e-4).unwrap();
        assert!(rep.passed(), "{rep:?}");
        let rep = check_layer(&mut bn, &x, Mode::Infer, 3, 1e-4).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }
}
