use rand::Rng;

use super::activation::{softmax_backward_in_place, softmax_rows_in_place};
use super::{gemm, gemm_serial, xavier_limit, Layer, MatMut, MatRef, Mode, NnError, Parameterized, Role, Scalar, Tensor};
use crate::par;

/// Token width and head split of a multi-head attention layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttentionConfig {
    pub d_model: usize,
    pub heads: usize,
}

impl AttentionConfig {
    pub fn new(d_model: usize, heads: usize) -> Result<Self, NnError> {
        if heads == 0 || d_model == 0 || d_model % heads != 0 {
            return Err(NnError::Config(format!(
                "head count {heads} must divide model width {d_model}"
            )));
        }
        Ok(AttentionConfig { d_model, heads })
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.heads
    }
}

/// Attention output and the row-stochastic weight matrix that produced it.
#[derive(Debug, Clone)]
pub struct AttentionOutput<T: Scalar> {
    /// `[tokens_q, d_v]`.
    pub output: Tensor<T>,
    /// `[tokens_q, tokens_k]`.
    pub weights: Tensor<T>,
}

/// `P = softmax(Q·Kᵀ/√d_k)` into `p`, then `out ← P·V`.
fn core_forward<T: Scalar>(q: MatRef<'_, T>, k: MatRef<'_, T>, v: MatRef<'_, T>, p: &mut [T], out: MatMut<'_, T>) {
    let scale = T::one() / T::of(q.cols() as f64).sqrt();
    let tk = k.rows();
    gemm_serial(scale, q, k.t(), T::zero(), MatMut::new(p, q.rows(), tk));
    softmax_rows_in_place(p, tk);
    gemm_serial(T::one(), MatRef::new(p, q.rows(), tk), v, T::zero(), out);
}

/// Backward of [`core_forward`]; overwrites `dq`, `dk`, `dv`.
#[allow(clippy::too_many_arguments)]
fn core_backward<T: Scalar>(
    q: MatRef<'_, T>,
    k: MatRef<'_, T>,
    v: MatRef<'_, T>,
    p: &[T],
    dout: MatRef<'_, T>,
    scratch: &mut [T],
    dq: MatMut<'_, T>,
    dk: MatMut<'_, T>,
    dv: MatMut<'_, T>,
) {
    let (tq, tk) = (q.rows(), k.rows());
    let scale = T::one() / T::of(q.cols() as f64).sqrt();
    let pm = MatRef::new(p, tq, tk);
    gemm_serial(T::one(), pm.t(), dout, T::zero(), dv);
    gemm_serial(T::one(), dout, v.t(), T::zero(), MatMut::new(scratch, tq, tk));
    softmax_backward_in_place(p, scratch, tk);
    let ds = MatRef::new(scratch, tq, tk);
    gemm_serial(scale, ds, k, T::zero(), dq);
    gemm_serial(scale, ds.t(), q, T::zero(), dk);
}

fn expect_matrix<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<(usize, usize), NnError> {
    match t.shape() {
        &[r, c] => Ok((r, c)),
        s => Err(NnError::Shape(format!("{what} must be a matrix, got {s:?}"))),
    }
}

/// `softmax(Q·Kᵀ/√d_k)·V` for single (unbatched) token matrices.
pub fn scaled_dot_product_attention<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
) -> Result<AttentionOutput<T>, NnError> {
    let (tq, dk) = expect_matrix(q, "Q")?;
    let (tk, dk2) = expect_matrix(k, "K")?;
    let (tv, dv) = expect_matrix(v, "V")?;
    if dk != dk2 || tk != tv {
        return Err(NnError::Shape(format!(
            "attention shapes Q {:?}, K {:?}, V {:?} are incompatible",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    let mut p = vec![T::zero(); tq * tk];
    let mut out = vec![T::zero(); tq * dv];
    core_forward(
        MatRef::new(q.data(), tq, dk),
        MatRef::new(k.data(), tk, dk),
        MatRef::new(v.data(), tk, dv),
        &mut p,
        MatMut::new(&mut out, tq, dv),
    );
    Ok(AttentionOutput {
        output: Tensor::from_vec(&[tq, dv], out)?,
        weights: Tensor::from_vec(&[tq, tk], p)?,
    })
}

/// Gradients of [`scaled_dot_product_attention`] with respect to Q, K and V.
pub fn scaled_dot_product_attention_backward<T: Scalar>(
    q: &Tensor<T>,
    k: &Tensor<T>,
    v: &Tensor<T>,
    weights: &Tensor<T>,
    dout: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), NnError> {
    let (tq, d) = expect_matrix(q, "Q")?;
    let (tk, _) = expect_matrix(k, "K")?;
    let (_, dvw) = expect_matrix(v, "V")?;
    weights.expect_shape(&[tq, tk], "attention weights")?;
    dout.expect_shape(&[tq, dvw], "attention output gradient")?;
    let mut scratch = vec![T::zero(); tq * tk];
    let (mut dq, mut dk, mut dv) = (vec![T::zero(); tq * d], vec![T::zero(); tk * d], vec![T::zero(); tk * dvw]);
    core_backward(
        MatRef::new(q.data(), tq, d),
        MatRef::new(k.data(), tk, d),
        MatRef::new(v.data(), tk, dvw),
        weights.data(),
        MatRef::new(dout.data(), tq, dvw),
        &mut scratch,
        MatMut::new(&mut dq, tq, d),
        MatMut::new(&mut dk, tk, d),
        MatMut::new(&mut dv, tk, dvw),
    );
    Ok((
        Tensor::from_vec(&[tq, d], dq)?,
        Tensor::from_vec(&[tk, d], dk)?,
        Tensor::from_vec(&[tk, dvw], dv)?,
    ))
}

/// Multi-head attention over batches of token matrices `[N, tokens, d_model]`.
///
/// Queries, keys and values are projected by `W_q`, `W_k`, `W_v`
/// (`[d_model, d_model]`, head `i` owning columns `i·d_head..(i+1)·d_head`),
/// attended per head, concatenated and projected by `W_o`. There are no bias
/// terms, so a zero `W_v` makes the layer output exactly zero.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention<T: Scalar> {
    pub cfg: AttentionConfig,
    pub w_q: Tensor<T>,
    pub w_k: Tensor<T>,
    pub w_v: Tensor<T>,
    pub w_o: Tensor<T>,
    cache: Option<MhaCache<T>>,
}

#[derive(Debug, Clone)]
struct MhaCache<T> {
    batch: usize,
    tq: usize,
    tk: usize,
    xq: Vec<T>,
    xk: Vec<T>,
    xv: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// `[N, heads, tq, tk]`.
    p: Vec<T>,
    concat: Vec<T>,
}

impl<T: Scalar> MultiHeadAttention<T> {
    pub fn new<R: Rng + ?Sized>(cfg: AttentionConfig, rng: &mut R) -> Self {
        let d = cfg.d_model;
        let limit = xavier_limit(d, d);
        let mut mk = || {
            let mut t = Tensor::uniform(&[d, d], limit, rng);
            t.require_grad();
            t
        };
        MultiHeadAttention {
            cfg,
            w_q: mk(),
            w_k: mk(),
            w_v: mk(),
            w_o: mk(),
            cache: None,
        }
    }

    /// Attention weights of the last forward pass, `[N, heads, tq, tk]`.
    pub fn attention_weights(&self) -> Option<Tensor<T>> {
        let c = self.cache.as_ref()?;
        Tensor::from_vec(&[c.batch, self.cfg.heads, c.tq, c.tk], c.p.clone()).ok()
    }

    fn check_input(&self, x: &Tensor<T>, what: &str) -> Result<(usize, usize), NnError> {
        match x.shape() {
            &[n, t, d] if d == self.cfg.d_model => Ok((n, t)),
            s => Err(NnError::Shape(format!(
                "{what} must be [N, tokens, {}], got {s:?}",
                self.cfg.d_model
            ))),
        }
    }

    /// Attention with separate query, key and value inputs.
    pub fn forward_qkv(&mut self, xq: &Tensor<T>, xk: &Tensor<T>, xv: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (n, tq) = self.check_input(xq, "query input")?;
        let (nk, tk) = self.check_input(xk, "key input")?;
        let (nv, tv) = self.check_input(xv, "value input")?;
        if n != nk || n != nv || tk != tv {
            return Err(NnError::Shape("key and value inputs must share batch and token counts".into()));
        }
        let d = self.cfg.d_model;
        let (h, dh) = (self.cfg.heads, self.cfg.d_head());
        fn w<T: Scalar>(t: &Tensor<T>) -> MatRef<'_, T> {
            let d = t.shape()[0];
            MatRef::new(t.data(), d, d)
        }
        let q = super::matmul(MatRef::new(xq.data(), n * tq, d), w(&self.w_q));
        let k = super::matmul(MatRef::new(xk.data(), n * tk, d), w(&self.w_k));
        let v = super::matmul(MatRef::new(xv.data(), n * tk, d), w(&self.w_v));

        let mut p = vec![T::zero(); n * h * tq * tk];
        let mut concat = vec![T::zero(); n * tq * d];
        par::for_each_chunk_pair_mut(&mut concat, tq * d, &mut p, h * tq * tk, |s, cat, ps| {
            let qs = &q[s * tq * d..(s + 1) * tq * d];
            let ks = &k[s * tk * d..(s + 1) * tk * d];
            let vs = &v[s * tk * d..(s + 1) * tk * d];
            for head in 0..h {
                let off = head * dh;
                core_forward(
                    MatRef::strided(&qs[off..], tq, dh, d, 1),
                    MatRef::strided(&ks[off..], tk, dh, d, 1),
                    MatRef::strided(&vs[off..], tk, dh, d, 1),
                    &mut ps[head * tq * tk..(head + 1) * tq * tk],
                    MatMut::strided(&mut cat[off..], tq, dh, d, 1),
                );
            }
        });
        let out = super::matmul(MatRef::new(&concat, n * tq, d), w(&self.w_o));
        self.cache = Some(MhaCache {
            batch: n,
            tq,
            tk,
            xq: xq.data().to_vec(),
            xk: xk.data().to_vec(),
            xv: xv.data().to_vec(),
            q,
            k,
            v,
            p,
            concat,
        });
        Tensor::from_vec(&[n, tq, d], out)
    }

    /// Gradients with respect to the query, key and value inputs.
    pub fn backward_qkv(&mut self, dout: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>), NnError> {
        let c = self.cache.as_ref().ok_or(NnError::NoCache("multi-head attention"))?;
        let (n, tq, tk) = (c.batch, c.tq, c.tk);
        let d = self.cfg.d_model;
        let (h, dh) = (self.cfg.heads, self.cfg.d_head());
        dout.expect_shape(&[n, tq, d], "attention output gradient")?;

        let (_, go) = self.w_o.value_and_grad_mut();
        gemm(T::one(), MatRef::new(&c.concat, n * tq, d).t(), MatRef::new(dout.data(), n * tq, d), T::one(), go);
        let dcat = super::matmul(MatRef::new(dout.data(), n * tq, d), MatRef::new(self.w_o.data(), d, d).t());

        // Per-sample buffer holding dQ | dK | dV | scratch.
        let block = tq * d + 2 * tk * d + tq * tk;
        let mut grads = vec![T::zero(); n * block];
        par::for_each_chunk_mut(&mut grads, block, |s, buf| {
            let qs = &c.q[s * tq * d..(s + 1) * tq * d];
            let ks = &c.k[s * tk * d..(s + 1) * tk * d];
            let vs = &c.v[s * tk * d..(s + 1) * tk * d];
            let dos = &dcat[s * tq * d..(s + 1) * tq * d];
            let (dq, rest) = buf.split_at_mut(tq * d);
            let (dk, rest) = rest.split_at_mut(tk * d);
            let (dv, scratch) = rest.split_at_mut(tk * d);
            for head in 0..h {
                let off = head * dh;
                core_backward(
                    MatRef::strided(&qs[off..], tq, dh, d, 1),
                    MatRef::strided(&ks[off..], tk, dh, d, 1),
                    MatRef::strided(&vs[off..], tk, dh, d, 1),
                    &c.p[(s * h + head) * tq * tk..(s * h + head + 1) * tq * tk],
                    MatRef::strided(&dos[off..], tq, dh, d, 1),
                    scratch,
                    MatMut::strided(&mut dq[off..], tq, dh, d, 1),
                    MatMut::strided(&mut dk[off..], tk, dh, d, 1),
                    MatMut::strided(&mut dv[off..], tk, dh, d, 1),
                );
            }
        });
        let gather = |start: usize, rows: usize| {
            let mut out = Vec::with_capacity(n * rows * d);
            for s in 0..n {
                out.extend_from_slice(&grads[s * block + start..s * block + start + rows * d]);
            }
            out
        };
        let dq = gather(0, tq);
        let dk = gather(tq * d, tk);
        let dv = gather(tq * d + tk * d, tk);

        let input_grad = |x: &[T], rows: usize, dproj: &[T], weight: &mut Tensor<T>| {
            let (_, g) = weight.value_and_grad_mut();
            gemm(T::one(), MatRef::new(x, rows, d).t(), MatRef::new(dproj, rows, d), T::one(), g);
            super::matmul(MatRef::new(dproj, rows, d), MatRef::new(weight.data(), d, d).t())
        };
        let dxq = input_grad(&c.xq, n * tq, &dq, &mut self.w_q);
        let dxk = input_grad(&c.xk, n * tk, &dk, &mut self.w_k);
        let dxv = input_grad(&c.xv, n * tk, &dv, &mut self.w_v);
        Ok((
            Tensor::from_vec(&[n, tq, d], dxq)?,
            Tensor::from_vec(&[n, tk, d], dxk)?,
            Tensor::from_vec(&[n, tk, d], dxv)?,
        ))
    }
}

impl<T: Scalar> Parameterized<T> for MultiHeadAttention<T> {
    fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>, Role)) {
        f("w_q", &mut self.w_q, Role::Trainable);
        f("w_k", &mut self.w_k, Role::Trainable);
        f("w_v", &mut self.w_v, Role::Trainable);
        f("w_o", &mut self.w_o, Role::Trainable);
    }
}

/// Self-attention: queries, keys and values all come from the input.
impl<T: Scalar> Layer<T> for MultiHeadAttention<T> {
    fn forward(&mut self, x: &Tensor<T>, _mode: Mode) -> Result<Tensor<T>, NnError> {
        self.forward_qkv(x, x, x)
    }

    fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        let (a, b, c) = self.backward_qkv(dy)?;
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .zip(c.data())
            .map(|((&x, &y), &z)| x + y + z)
            .collect();
        Tensor::from_vec(a.shape(), data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_layer, grad_check};
    use rand::SeedableRng;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(seed)
    }

    fn identity(d: usize) -> Tensor<f64> {
        let mut t = Tensor::zeros(&[d, d]);
        for i in 0..d {
            t.data_mut()[i * d + i] = 1.0;
        }
        t.require_grad();
        t
    }

    #[test]
    fn single_token_returns_value_row() {
        let q = Tensor::from_vec(&[1, 3], vec![5.0, -1.0, 2.0]).unwrap();
        let k = Tensor::from_vec(&[1, 3], vec![0.3, 0.3, 9.0]).unwrap();
        let v = Tensor::from_vec(&[1, 2], vec![7.0, -4.0]).unwrap();
        let out = scaled_dot_product_attention(&q, &k, &v).unwrap();
        assert_eq!(out.output.data(), &[7.0, -4.0]);
        assert_eq!(out.weights.data(), &[1.0]);
    }

    #[test]
    fn saturated_query_selects_matching_value() {
        // Orthogonal keys; the query is a large multiple of key 2.
        let k = Tensor::from_vec(&[3, 3], vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let q = Tensor::from_vec(&[1, 3], vec![0.0, 0.0, 200.0]).unwrap();
        let v = Tensor::from_vec(&[3, 2], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let out = scaled_dot_product_attention::<f64>(&q, &k, &v).unwrap();
        assert!((out.output.data()[0] - 5.0).abs() < 1e-12);
        assert!((out.output.data()[1] - 6.0).abs() < 1e-12);
    }

    #[test]
    fn sdpa_gradient_check() {
        let mut r = rng(1);
        let q = Tensor::<f64>::uniform(&[3, 4], 1.0, &mut r);
        let k = Tensor::<f64>::uniform(&[5, 4], 1.0, &mut r);
        let v = Tensor::<f64>::uniform(&[5, 2], 1.0, &mut r);
        let w = Tensor::<f64>::uniform(&[3, 2], 1.0, &mut r);
        let fwd = scaled_dot_product_attention(&q, &k, &v).unwrap();
        let (dq, dk, dv) = scaled_dot_product_attention_backward(&q, &k, &v, &fwd.weights, &w).unwrap();
        let loss = |q: &Tensor<f64>, k: &Tensor<f64>, v: &Tensor<f64>| {
            let o = scaled_dot_product_attention(q, k, v).unwrap().output;
            o.data().iter().zip(w.data()).map(|(a, b)| a * b).sum::<f64>()
        };
        let rq = grad_check(q.data(), dq.data(), |x| loss(&Tensor::from_vec(&[3, 4], x.to_vec()).unwrap(), &k, &v), 1e-4);
        let rk = grad_check(k.data(), dk.data(), |x| loss(&q, &Tensor::from_vec(&[5, 4], x.to_vec()).unwrap(), &v), 1e-4);
        let rv = grad_check(v.data(), dv.data(), |x| loss(&q, &k, &Tensor::from_vec(&[5, 2], x.to_vec()).unwrap()), 1e-4);
        assert!(rq.passed && rk.passed && rv.passed, "{rq:?} {rk:?} {rv:?}");
    }

    #[test]
    fn single_head_identity_projections_equal_plain_attention() {
        let cfg = AttentionConfig::new(4, 1).unwrap();
        let mut mha = MultiHeadAttention::<f64>::new(cfg, &mut rng(2));
        mha.w_q = identity(4);
        mha.w_k = identity(4);
        mha.w_v = identity(4);
        mha.w_o = identity(4);
        let x = Tensor::<f64>::uniform(&[1, 6, 4], 1.0, &mut rng(3));
        let y = mha.forward(&x, Mode::Infer).unwrap();
        let x2 = x.clone().reshape(&[6, 4]).unwrap();
        let plain = scaled_dot_product_attention(&x2, &x2, &x2).unwrap();
        assert_eq!(y.data(), plain.output.data());
    }

    #[test]
    fn output_shape_and_row_stochastic_weights() {
        for heads in [1, 2, 4] {
            let cfg = AttentionConfig::new(8, heads).unwrap();
            let mut mha = MultiHeadAttention::<f64>::new(cfg, &mut rng(4));
            let x = Tensor::<f64>::uniform(&[3, 5, 8], 2.0, &mut rng(5));
            let y = mha.forward(&x, Mode::Infer).unwrap();
            assert_eq!(y.shape(), x.shape());
            let p = mha.attention_weights().unwrap();
            assert_eq!(p.shape(), &[3, heads, 5, 5]);
            for row in p.data().chunks(5) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn heads_must_divide_width() {
        assert!(AttentionConfig::new(6, 4).is_err());
        assert!(AttentionConfig::new(6, 0).is_err());
        assert_eq!(AttentionConfig::new(8, 4).unwrap().d_head(), 2);
    }

    #[test]
    fn mha_gradient_check() {
        let cfg = AttentionConfig::new(6, 3).unwrap();
        let mut mha = MultiHeadAttention::<f64>::new(cfg, &mut rng(6));
        let x = Tensor::<f64>::uniform(&[2, 4, 6], 1.0, &mut rng(7));
        let rep = check_layer(&mut mha, &x, Mode::Train, 8, 1e-4).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn cross_attention_gradient_check() {
        let cfg = AttentionConfig::new(4, 2).unwrap();
        let mut mha = MultiHeadAttention::<f64>::new(cfg, &mut rng(9));
        let mut r = rng(10);
        let xq = Tensor::<f64>::uniform(&[2, 3, 4], 1.0, &mut r);
        let xk = Tensor::<f64>::uniform(&[2, 5, 4], 1.0, &mut r);
        let xv = Tensor::<f64>::uniform(&[2, 5, 4], 1.0, &mut r);
        let w = Tensor::<f64>::uniform(&[2, 3, 4], 1.0, &mut r);
        mha.forward_qkv(&xq, &xk, &xv).unwrap();
        let (dq, dk, dv) = mha.backward_qkv(&w).unwrap();
        let mut loss = |a: &Tensor<f64>, b: &Tensor<f64>, c: &Tensor<f64>| {
            let o = mha.forward_qkv(a, b, c).unwrap();
            o.data().iter().zip(w.data()).map(|(x, y)| x * y).sum::<f64>()
        };
        let t = |s: &[usize], v: &[f64]| Tensor::from_vec(s, v.to_vec()).unwrap();
        let rq = grad_check(xq.data(), dq.data(), |v| loss(&t(&[2, 3, 4], v), &xk, &xv), 1e-4);
        let rk = grad_check(xk.data(), dk.data(), |v| loss(&xq, &t(&[2, 5, 4], v), &xv), 1e-4);
        let rv = grad_check(xv.data(), dv.data(), |v| loss(&xq, &xk, &t(&[2, 5, 4], v)), 1e-4);
        assert!(rq.passed && rk.passed && rv.passed, "{rq:?} {rk:?} {rv:?}");
    }
}
