use super::{Layer, Mode, NnError, Parameterized, Role, Scalar, Tensor};

/// Elementwise `max(x, 0)`.
pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// ReLU layer; remembers which inputs were positive.
#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Vec<bool>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu::default()
    }
}

impl<T: Scalar> Parameterized<T> for Relu {
    fn visit(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor<T>, Role)) {}
}

impl<T: Scalar> Layer<T> for Relu {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>, NnError> {
        self.mask = Some(x.data().iter().map(|&v| v > T::zero()).collect());
        Ok(relu(x))
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let mask = self.mask.as_ref().ok_or(NnError::NoCache("relu"))?;
        if mask.len() != dy.len() {
            return Err(NnError::Shape(format!("relu backward: {} vs {}", mask.len(), dy.len())));
        }
        let data = dy
            .data()
            .iter()
            .zip(mask)
            .map(|(&g, &m)| if m { g } else { T::zero() })
            .collect();
        Tensor::from_vec(dy.shape(), data)
    }
}

/// Softmax of each length-`cols` row of `data`, in place.
///
/// The row maximum is subtracted before exponentiation.
pub(crate) fn softmax_rows_in_place<T: Scalar>(data: &mut [T], cols: usize) {
    for row in data.chunks_exact_mut(cols) {
        let max = row.iter().fold(T::neg_infinity(), |m, &x| m.max(x));
        let mut sum = T::zero();
        for x in row.iter_mut() {
            *x = (*x - max).exp();
            sum += *x;
        }
        let inv = T::one() / sum;
        row.iter_mut().for_each(|x| *x *= inv);
    }
}

/// Given softmax output `p` and upstream `dp` (both rows of `cols`), writes
/// the gradient with respect to the logits into `dp`.
pub(crate) fn softmax_backward_in_place<T: Scalar>(p: &[T], dp: &mut [T], cols: usize) {
    for (pr, gr) in p.chunks_exact(cols).zip(dp.chunks_exact_mut(cols)) {
        let dot: T = pr.iter().zip(gr.iter()).map(|(&a, &b)| a * b).sum();
        for (g, &pv) in gr.iter_mut().zip(pr) {
            *g = pv * (*g - dot);
        }
    }
}

/// Row-wise softmax over the last axis.
pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let cols = *x.shape().last().unwrap_or(&1);
    let mut out = x.clone();
    if cols > 0 {
        softmax_rows_in_place(out.data_mut(), cols);
    }
    out
}

/// Gradient of a row-wise softmax with respect to its logits, given the
/// forward output `p` and upstream gradient `dp`.
pub fn softmax_backward<T: Scalar>(p: &Tensor<T>, dp: &Tensor<T>) -> Result<Tensor<T>, NnError> {
    dp.expect_shape(p.shape(), "softmax backward")?;
    let cols = *p.shape().last().unwrap_or(&1);
    let mut g = dp.clone();
    softmax_backward_in_place(p.data(), g.data_mut(), cols);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_layer;
    use rand::SeedableRng;

    #[test]
    fn relu_values() {
        let t = Tensor::from_vec(&[2], vec![-1.0f64, 2.0]).unwrap();
        assert_eq!(relu(&t).data(), &[0.0, 2.0]);
    }

    #[test]
    fn softmax_uniform_row() {
        let t = Tensor::from_vec(&[1, 3], vec![0.0f64; 3]).unwrap();
        for &p in softmax(&t).data() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_large_logits_do_not_overflow() {
        let t = Tensor::from_vec(&[1, 2], vec![1000.0f64, 0.0]).unwrap();
        let p = softmax(&t);
        assert!((p.data()[0] - 1.0).abs() < 1e-15);
        assert!(p.data()[1] >= 0.0 && p.data()[1] < 1e-300);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let t = Tensor::<f64>::uniform(&[7, 11], 30.0, &mut rng);
        for row in softmax(&t).data().chunks(11) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_gradient_matches_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let x = Tensor::<f64>::uniform(&[3, 5], 2.0, &mut rng);
        let w = Tensor::<f64>::uniform(&[3, 5], 1.0, &mut rng);
        let p = softmax(&x);
        let analytic = softmax_backward(&p, &w).unwrap();
        let loss = |v: &[f64]| {
            let t = Tensor::from_vec(&[3, 5], v.to_vec()).unwrap();
            softmax(&t).data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let rep = crate::nn::gradcheck::grad_check(x.data(), analytic.data(), loss, 1e-4);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn relu_gradient_check() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = Tensor::<f64>::uniform(&[4, 6], 1.0, &mut rng);
        let rep = check_layer(&mut Relu::new(), &x, Mode::Train, 9, 1e-4).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }
}
