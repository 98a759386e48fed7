use rand::Rng;

use super::{NnError, Scalar};

/// Dense row-major tensor with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); shape.iter().product()],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(NnError::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    /// Trainable parameter: zero-initialised gradient buffer attached.
    pub fn param(shape: &[usize], data: Vec<T>) -> Self {
        let mut t = Self::from_vec(shape, data).expect("parameter shape");
        t.grad = Some(vec![T::zero(); t.data.len()]);
        t
    }

    /// Uniform values in `[-limit, limit]`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], limit: f64, rng: &mut R) -> Self {
        let n = shape.iter().product();
        let data = (0..n).map(|_| T::of(rng.random_range(-limit..=limit))).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn grad_mut(&mut self) -> Option<&mut [T]> {
        self.grad.as_deref_mut()
    }

    /// Attaches a zeroed gradient buffer if none is present.
    pub fn require_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![T::zero(); self.data.len()]);
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = &mut self.grad {
            g.iter_mut().for_each(|x| *x = T::zero());
        }
    }

    /// Value and gradient buffers together (the gradient is created if missing).
    pub fn value_and_grad_mut(&mut self) -> (&mut [T], &mut [T]) {
        self.require_grad();
        let g = self.grad.as_deref_mut().expect("gradient attached");
        (&mut self.data, g)
    }

    /// Same data viewed under another shape with the same element count.
    pub fn reshape(mut self, shape: &[usize]) -> Result<Self, NnError> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(NnError::Shape(format!("cannot reshape {:?} into {shape:?}", self.shape)));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn fill(&mut self, v: T) {
        self.data.iter_mut().for_each(|x| *x = v);
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
            grad: None,
        }
    }

    /// Converts element type, dropping the gradient.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| U::of(x.as_f64())).collect(),
            grad: None,
        }
    }

    /// Errors unless `self.shape() == shape`.
    pub fn expect_shape(&self, shape: &[usize], what: &str) -> Result<(), NnError> {
        if self.shape != shape {
            return Err(NnError::Shape(format!("{what}: expected {shape:?}, got {:?}", self.shape)));
        }
        Ok(())
    }

    /// Swaps the last two axes of a `[..., a, b]` tensor.
    pub fn transpose_last2(&self) -> Self {
        let r = self.shape.len();
        assert!(r >= 2, "transpose needs rank >= 2");
        let (a, b) = (self.shape[r - 2], self.shape[r - 1]);
        let batch = self.data.len() / (a * b).max(1);
        let mut out = vec![T::zero(); self.data.len()];
        for n in 0..batch {
            let src = &self.data[n * a * b..(n + 1) * a * b];
            let dst = &mut out[n * a * b..(n + 1) * a * b];
            for i in 0..a {
                for j in 0..b {
                    dst[j * a + i] = src[i * b + j];
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.swap(r - 2, r - 1);
        Tensor {
            shape,
            data: out,
            grad: None,
        }
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Self, NnError> {
        other.expect_shape(&self.shape, "elementwise add")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a + b).collect(),
            grad: None,
        })
    }

    pub fn sub(&self, other: &Tensor<T>) -> Result<Self, NnError> {
        other.expect_shape(&self.shape, "elementwise sub")?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
            grad: None,
        })
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }
}
