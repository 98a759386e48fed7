use rand::Rng;

use super::{gemm, xavier_limit, Layer, MatRef, Mode, NnError, Parameterized, Role, Scalar, Tensor};
use crate::par;

/// 2-D cross-correlation with stride 1 and "same" zero padding on
/// `[N, H, W, C_in]` inputs.
///
/// The kernel is stored as `[K, K, C_in, C_out]`, so reshaped to
/// `[K·K·C_in, C_out]` it multiplies the im2col matrix directly.
#[derive(Debug, Clone)]
pub struct Conv2d<T: Scalar> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    kernel: usize,
    c_in: usize,
    c_out: usize,
    cache: Option<ConvCache<T>>,
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    cols: Vec<T>,
    dims: [usize; 3],
}

impl<T: Scalar> Conv2d<T> {
    /// Xavier-uniform kernel, zero bias.
    pub fn new<R: Rng + ?Sized>(kernel: usize, c_in: usize, c_out: usize, rng: &mut R) -> Self {
        assert!(kernel % 2 == 1, "kernel size must be odd for same padding");
        let limit = xavier_limit(kernel * kernel * c_in, kernel * kernel * c_out);
        let mut weight = Tensor::uniform(&[kernel, kernel, c_in, c_out], limit, rng);
        weight.require_grad();
        Conv2d {
            weight,
            bias: Tensor::param(&[c_out], vec![T::zero(); c_out]),
            kernel,
            c_in,
            c_out,
            cache: None,
        }
    }

    pub fn kernel(&self) -> usize {
        self.kernel
    }

    pub fn in_channels(&self) -> usize {
        self.c_in
    }

    pub fn out_channels(&self) -> usize {
        self.c_out
    }

    fn patch(&self) -> usize {
        self.kernel * self.kernel * self.c_in
    }

    fn im2col(&self, x: &Tensor<T>, n: usize, h: usize, w: usize) -> Vec<T> {
        let (k, cin, patch) = (self.kernel, self.c_in, self.patch());
        let pad = k / 2;
        let xs = x.data();
        let mut cols = vec![T::zero(); n * h * w * patch];
        par::for_each_chunk_mut(&mut cols, h * w * patch, |s, chunk| {
            let img = &xs[s * h * w * cin..(s + 1) * h * w * cin];
            for i in 0..h {
                for j in 0..w {
                    let row = &mut chunk[(i * w + j) * patch..(i * w + j + 1) * patch];
                    for ki in 0..k {
                        let ii = i + ki;
                        if ii < pad || ii - pad >= h {
                            continue;
                        }
                        for kj in 0..k {
                            let jj = j + kj;
                            if jj < pad || jj - pad >= w {
                                continue;
                            }
                            let src = ((ii - pad) * w + (jj - pad)) * cin;
                            let dst = (ki * k + kj) * cin;
                            row[dst..dst + cin].copy_from_slice(&img[src..src + cin]);
                        }
                    }
                }
            }
        });
        cols
    }
}

impl<T: Scalar> Parameterized<T> for Conv2d<T> {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, Role)) {
        f("weight", &mut self.weight, Role::Trainable);
        f("bias", &mut self.bias, Role::Trainable);
    }
}

impl<T: Scalar> Layer<T> for Conv2d<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>, NnError> {
        let &[n, h, w, c] = x.shape() else {
            return Err(NnError::Shape(format!("conv2d expects [N, H, W, C], got {:?}", x.shape())));
        };
        if c != self.c_in {
            return Err(NnError::Shape(format!("conv2d expects {} input channels, got {c}", self.c_in)));
        }
        let cols = self.im2col(x, n, h, w);
        let rows = n * h * w;
        let mut out = Vec::with_capacity(rows * self.c_out);
        for _ in 0..rows {
            out.extend_from_slice(self.bias.data());
        }
        gemm(
            T::one(),
            MatRef::new(&cols, rows, self.patch()),
            MatRef::new(self.weight.data(), self.patch(), self.c_out),
            T::one(),
            &mut out,
        );
        self.cache = Some(ConvCache { cols, dims: [n, h, w] });
        Tensor::from_vec(&[n, h, w, self.c_out], out)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let cache = self.cache.as_ref().ok_or(NnError::NoCache("conv2d"))?;
        let [n, h, w] = cache.dims;
        dy.expect_shape(&[n, h, w, self.c_out], "conv2d backward")?;
        let (k, cin, cout, patch) = (self.kernel, self.c_in, self.c_out, self.patch());
        let rows = n * h * w;
        let dys = dy.data();

        let (_, wgrad) = self.weight.value_and_grad_mut();
        gemm(
            T::one(),
            MatRef::new(&cache.cols, rows, patch).t(),
            MatRef::new(dys, rows, cout),
            T::one(),
            wgrad,
        );
        let (_, bgrad) = self.bias.value_and_grad_mut();
        for row in dys.chunks_exact(cout) {
            for (g, &d) in bgrad.iter_mut().zip(row) {
                *g += d;
            }
        }

        let mut dcols = vec![T::zero(); rows * patch];
        gemm(
            T::one(),
            MatRef::new(dys, rows, cout),
            MatRef::new(self.weight.data(), patch, cout).t(),
            T::zero(),
            &mut dcols,
        );
        let pad = k / 2;
        let mut dx = vec![T::zero(); rows * cin];
        par::for_each_chunk_mut(&mut dx, h * w * cin, |s, img| {
            let dc = &dcols[s * h * w * patch..(s + 1) * h * w * patch];
            for i in 0..h {
                for j in 0..w {
                    let row = &dc[(i * w + j) * patch..(i * w + j + 1) * patch];
                    for ki in 0..k {
                        let ii = i + ki;
                        if ii < pad || ii - pad >= h {
                            continue;
                        }
                        for kj in 0..k {
                            let jj = j + kj;
                            if jj < pad || jj - pad >= w {
                                continue;
                            }
                            let dst = ((ii - pad) * w + (jj - pad)) * cin;
                            let src = (ki * k + kj) * cin;
                            for (a, &b) in img[dst..dst + cin].iter_mut().zip(&row[src..src + cin]) {
                                *a += b;
                            }
                        }
                    }
                }
            }
        });
        Tensor::from_vec(&[n, h, w, cin], dx)
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
    fn delta_kernel_is_identity() {
        let mut conv = Conv2d::<f64>::new(3, 1, 1, &mut rng(0));
        conv.weight.fill(0.0);
        conv.weight.data_mut()[4] = 1.0;
        let x = Tensor::from_vec(&[1, 1, 1, 1], vec![2.5]).unwrap();
        assert_eq!(conv.forward(&x, Mode::Infer).unwrap().data(), &[2.5]);

        let mut conv = Conv2d::<f64>::new(3, 2, 2, &mut rng(0));
        conv.weight.fill(0.0);
        // Centre tap, channel c -> channel c.
        for c in 0..2 {
            conv.weight.data_mut()[(4 * 2 + c) * 2 + c] = 1.0;
        }
        let x = Tensor::<f64>::uniform(&[2, 3, 4, 2], 1.0, &mut rng(1));
        assert_eq!(conv.forward(&x, Mode::Infer).unwrap(), x);
    }

    #[test]
    fn zero_kernel_gives_zero() {
        let mut conv = Conv2d::<f64>::new(3, 2, 3, &mut rng(0));
        conv.weight.fill(0.0);
        let x = Tensor::<f64>::uniform(&[1, 4, 4, 2], 5.0, &mut rng(2));
        let y = conv.forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.shape(), &[1, 4, 4, 3]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_direct_convolution() {
        let mut conv = Conv2d::<f64>::new(3, 2, 3, &mut rng(3));
        conv.bias.data_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        let x = Tensor::<f64>::uniform(&[2, 4, 5, 2], 1.0, &mut rng(4));
        let y = conv.forward(&x, Mode::Infer).unwrap();
        let (h, w) = (4usize, 5usize);
        for n in 0..2 {
            for i in 0..h {
                for j in 0..w {
                    for co in 0..3 {
                        let mut acc = conv.bias.data()[co];
                        for ki in 0..3 {
                            for kj in 0..3 {
                                let (ii, jj) = (i as isize + ki as isize - 1, j as isize + kj as isize - 1);
                                if ii < 0 || jj < 0 || ii >= h as isize || jj >= w as isize {
                                    continue;
                                }
                                for ci in 0..2 {
                                    let xv = x.data()[((n * h + ii as usize) * w + jj as usize) * 2 + ci];
                                    acc += xv * conv.weight.data()[((ki * 3 + kj) * 2 + ci) * 3 + co];
                                }
                            }
                        }
                        let got = y.data()[((n * h + i) * w + j) * 3 + co];
                        assert!((got - acc).abs() < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn gradient_check() {
        let mut conv = Conv2d::<f64>::new(3, 2, 3, &mut rng(5));
        conv.bias.data_mut().copy_from_slice(&[0.1, -0.2, 0.3]);
        let x = Tensor::<f64>::uniform(&[1, 4, 4, 2], 1.0, &mut rng(6));
        let rep = check_layer(&mut conv, &x, Mode::Train, 7, 1e-4).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn preserves_spatial_shape() {
        let mut conv = Conv2d::<f32>::new(3, 3, 5, &mut rng(8));
        for (h, w) in [(1, 1), (2, 7), (8, 8)] {
            let x = Tensor::<f32>::zeros(&[2, h, w, 3]);
            assert_eq!(conv.forward(&x, Mode::Infer).unwrap().shape(), &[2, h, w, 5]);
        }
    }

    #[test]
    fn rejects_channel_mismatch() {
        let mut conv = Conv2d::<f32>::new(3, 3, 5, &mut rng(8));
        assert!(conv.forward(&Tensor::zeros(&[1, 2, 2, 4]), Mode::Infer).is_err());
    }
}
