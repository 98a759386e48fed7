use rand::Rng;

use super::{gemm, xavier_limit, Layer, MatRef, Mode, NnError, Parameterized, Role, Scalar, Tensor};

/// Fully connected layer `y = x·W + b` applied to the last axis.
#[derive(Debug, Clone)]
pub struct Linear<T: Scalar> {
    /// `[Z_in, Z_out]`.
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Linear<T> {
    pub fn new<R: Rng + ?Sized>(z_in: usize, z_out: usize, rng: &mut R) -> Self {
        let mut weight = Tensor::uniform(&[z_in, z_out], xavier_limit(z_in, z_out), rng);
        weight.require_grad();
        Linear {
            weight,
            bias: Tensor::param(&[z_out], vec![T::zero(); z_out]),
            input: None,
        }
    }

    pub fn z_in(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn z_out(&self) -> usize {
        self.weight.shape()[1]
    }
}

impl<T: Scalar> Parameterized<T> for Linear<T> {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, Role)) {
        f("weight", &mut self.weight, Role::Trainable);
        f("bias", &mut self.bias, Role::Trainable);
    }
}

impl<T: Scalar> Layer<T> for Linear<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>, NnError> {
        let (zi, zo) = (self.z_in(), self.z_out());
        if x.shape().last() != Some(&zi) {
            return Err(NnError::Shape(format!("linear expects last axis {zi}, got {:?}", x.shape())));
        }
        let rows = x.len() / zi;
        let mut out = Vec::with_capacity(rows * zo);
        for _ in 0..rows {
            out.extend_from_slice(self.bias.data());
        }
        gemm(
            T::one(),
            MatRef::new(x.data(), rows, zi),
            MatRef::new(self.weight.data(), zi, zo),
            T::one(),
            &mut out,
        );
        self.input = Some(x.clone());
        let mut shape = x.shape().to_vec();
        *shape.last_mut().expect("rank >= 1") = zo;
        Tensor::from_vec(&shape, out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let x = self.input.as_ref().ok_or(NnError::NoCache("linear"))?;
        let (zi, zo) = (self.z_in(), self.z_out());
        let rows = x.len() / zi;
        if dy.len() != rows * zo {
            return Err(NnError::Shape(format!("linear backward: expected {} values, got {}", rows * zo, dy.len())));
        }
        let (_, wg) = self.weight.value_and_grad_mut();
        gemm(
            T::one(),
            MatRef::new(x.data(), rows, zi).t(),
            MatRef::new(dy.data(), rows, zo),
            T::one(),
            wg,
        );
        let (_, bg) = self.bias.value_and_grad_mut();
        for row in dy.data().chunks_exact(zo) {
            bg.iter_mut().zip(row).for_each(|(g, &d)| *g += d);
        }
        let mut dx = vec![T::zero(); rows * zi];
        gemm(
            T::one(),
            MatRef::new(dy.data(), rows, zo),
            MatRef::new(self.weight.data(), zi, zo).t(),
            T::zero(),
            &mut dx,
        );
        Tensor::from_vec(x.shape(), dx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::check_layer;
    use rand::SeedableRng;

    #[test]
    fn known_product() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut fc = Linear::<f64>::new(2, 3, &mut rng);
        fc.weight.data_mut().copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        fc.bias.data_mut().copy_from_slice(&[0.5, 0.0, -0.5]);
        let x = Tensor::from_vec(&[1, 2], vec![1.0, -1.0]).unwrap();
        let y = fc.forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.data(), &[-2.5, -3.0, -3.5]);
    }

    #[test]
    fn gradient_check_is_tight() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut fc = Linear::<f64>::new(5, 4, &mut rng);
        let x = Tensor::<f64>::uniform(&[2, 3, 5], 1.0, &mut rng);
        let rep = check_layer(&mut fc, &x, Mode::Train, 2, 1e-6).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn shape_mismatch() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let mut fc = Linear::<f32>::new(5, 4, &mut rng);
        assert!(fc.forward(&Tensor::zeros(&[2, 4]), Mode::Infer).is_err());
    }
}
