//! Central finite-difference gradient checks.
//!
//! Relative error per element is `|a − n| / max(|a|, |n|, 1e-3·‖n‖∞, 1e-5)`
//! where `a` is the analytic and `n` the numerical derivative. The floors keep
//! entries whose true derivative is (nearly) zero, such as a convolution bias
//! feeding train-mode batch norm, from turning difference noise into a
//! relative error of one.

use rand::SeedableRng;

use super::{Layer, Mode, NnError, Role, Tensor};

/// Finite-difference step used by every check.
pub const FD_STEP: f64 = 1e-5;

/// Smallest denominator of the relative error.
pub const ABS_FLOOR: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Index of the worst element.
    pub worst_index: usize,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    fn from_pairs(analytic: &[f64], numeric: &[f64], tolerance: f64) -> Self {
        let scale = numeric.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let floor = (1e-3 * scale).max(ABS_FLOOR);
        let mut rep = GradCheckReport {
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_index: 0,
            checked: analytic.len(),
            tolerance,
            passed: true,
        };
        for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
            let abs = (a - n).abs();
            let rel = abs / a.abs().max(n.abs()).max(floor);
            rep.max_abs_error = rep.max_abs_error.max(abs);
            if rel > rep.max_rel_error || rel.is_nan() {
                rep.max_rel_error = rel;
                rep.worst_index = i;
            }
        }
        rep.passed = rep.max_rel_error <= tolerance;
        rep
    }
}

/// Numerical gradient of `f` at `x` by central differences.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(x: &[f64], mut f: F) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Compares `analytic` with central differences of `f` around `x`.
pub fn grad_check<F: FnMut(&[f64]) -> f64>(x: &[f64], analytic: &[f64], f: F, tolerance: f64) -> GradCheckReport {
    assert_eq!(x.len(), analytic.len(), "gradient length differs from input length");
    let numeric = numeric_gradient(x, f);
    GradCheckReport::from_pairs(analytic, &numeric, tolerance)
}

/// Per-tensor results of [`check_layer`].
#[derive(Debug, Clone)]
pub struct LayerCheckReport {
    pub input: GradCheckReport,
    pub params: Vec<(String, GradCheckReport)>,
}

impl LayerCheckReport {
    pub fn passed(&self) -> bool {
        self.input.passed && self.params.iter().all(|(_, r)| r.passed)
    }

    pub fn max_rel_error(&self) -> f64 {
        self.params
            .iter()
            .map(|(_, r)| r.max_rel_error)
            .fold(self.input.max_rel_error, f64::max)
    }
}

fn projected_loss(y: &Tensor<f64>, w: &Tensor<f64>) -> f64 {
    y.data().iter().zip(w.data()).map(|(a, b)| a * b).sum()
}

/// Checks input and trainable-parameter gradients of `layer` at `x` using
/// the scalar loss `Σ w ⊙ layer(x)` with fixed random weights `w`.
pub fn check_layer<L: Layer<f64> + ?Sized>(
    layer: &mut L,
    x: &Tensor<f64>,
    mode: Mode,
    seed: u64,
    tolerance: f64,
) -> Result<LayerCheckReport, NnError> {
    let y = layer.forward(x, mode)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::<f64>::uniform(y.shape(), 1.0, &mut rng);

    layer.zero_grad();
    layer.forward(x, mode)?;
    let dx = layer.backward(&w)?;

    let mut analytic: Vec<(String, Vec<f64>)> = Vec::new();
    layer.visit(&mut |name, t, role| {
        if role == Role::Trainable {
            analytic.push((name.to_string(), t.grad().map(<[f64]>::to_vec).unwrap_or_default()));
        }
    });

    let shape = x.shape().to_vec();
    let input = grad_check(
        x.data(),
        dx.data(),
        |v| {
            let xt = Tensor::from_vec(&shape, v.to_vec()).expect("same shape");
            projected_loss(&layer.forward(&xt, mode).expect("forward"), &w)
        },
        tolerance,
    );

    let mut params = Vec::new();
    for (name, grad) in analytic {
        let mut values = Vec::new();
        layer.visit(&mut |n, t, _| {
            if n == name {
                values = t.data().to_vec();
            }
        });
        let rep = grad_check(
            &values,
            &grad,
            |v| {
                layer.visit(&mut |n, t, _| {
                    if n == name {
                        t.data_mut().copy_from_slice(v);
                    }
                });
                projected_loss(&layer.forward(x, mode).expect("forward"), &w)
            },
            tolerance,
        );
        layer.visit(&mut |n, t, _| {
            if n == name {
                t.data_mut().copy_from_slice(&values);
            }
        });
        params.push((name, rep));
    }
    Ok(LayerCheckReport { input, params })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_passes_and_wrong_gradient_fails() {
        let x = [1.0, -2.0, 0.5];
        let f = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>();
        let good: Vec<f64> = x.iter().map(|a| 2.0 * a).collect();
        assert!(grad_check(&x, &good, f, 1e-6).passed);
        let bad: Vec<f64> = x.iter().map(|a| 2.1 * a).collect();
        let rep = grad_check(&x, &bad, f, 1e-6);
        assert!(!rep.passed);
        assert!(rep.max_rel_error > 0.04);
    }
}
