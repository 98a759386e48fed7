use std::collections::BTreeMap;

use super::{NnError, Parameterized, Role, Scalar, Tensor};

/// Adam hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment estimates, keyed by parameter name.
#[derive(Debug, Clone, Default)]
pub struct AdamState<T: Scalar> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: BTreeMap<String, Vec<T>>,
    pub v: BTreeMap<String, Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// Applies one bias-corrected update to every trainable tensor of `model`
    /// using its accumulated gradient. Tensors without a gradient are skipped.
    pub fn step<P: Parameterized<T> + ?Sized>(&mut self, model: &mut P) -> Result<(), NnError> {
        self.step += 1;
        let mut result = Ok(());
        model.visit(&mut |name, t, role| {
            if role == Role::Trainable && result.is_ok() {
                result = self.update(name, t);
            }
        });
        result
    }

    /// Same as [`AdamState::step`] for an explicit list of named tensors.
    pub fn step_tensors<'a, I>(&mut self, tensors: I) -> Result<(), NnError>
    where
        I: IntoIterator<Item = (&'a str, &'a mut Tensor<T>)>,
    {
        self.step += 1;
        for (name, t) in tensors {
            self.update(name, t)?;
        }
        Ok(())
    }

    fn update(&mut self, name: &str, t: &mut Tensor<T>) -> Result<(), NnError> {
        let Some(_) = t.grad() else { return Ok(()) };
        let n = t.len();
        let m = self.m.entry(name.to_string()).or_insert_with(|| vec![T::zero(); n]);
        let v = self.v.entry(name.to_string()).or_insert_with(|| vec![T::zero(); n]);
        if m.len() != n || v.len() != n {
            return Err(NnError::Shape(format!(
                "optimiser state for {name} has {} values, tensor has {n}",
                m.len()
            )));
        }
        let c = self.config;
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let step = self.step as i32;
        let lr_t = T::of(c.learning_rate * (1.0 - c.beta2.powi(step)).sqrt() / (1.0 - c.beta1.powi(step)));
        let eps_hat = T::of(c.epsilon * (1.0 - c.beta2.powi(step)).sqrt());
        let (w, g) = t.value_and_grad_mut();
        for i in 0..n {
            m[i] = b1 * m[i] + (T::one() - b1) * g[i];
            v[i] = b2 * v[i] + (T::one() - b2) * g[i] * g[i];
            w[i] -= lr_t * m[i] / (v[i].sqrt() + eps_hat);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        w: Tensor<f64>,
    }

    impl Parameterized<f64> for Quadratic {
        fn visit(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<f64>, Role)) {
            f("w", &mut self.w, Role::Trainable);
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut q = Quadratic {
            w: Tensor::param(&[2], vec![1.0, -3.0]),
        };
        q.w.grad_mut().unwrap().copy_from_slice(&[0.5, -2.0]);
        let mut adam = AdamState::new(AdamConfig::default());
        adam.step(&mut q).unwrap();
        // After one bias-corrected step the update is lr·sign(g) up to ε.
        assert!((q.w.data()[0] - (1.0 - 1e-3)).abs() < 1e-9);
        assert!((q.w.data()[1] - (-3.0 + 1e-3)).abs() < 1e-9);
    }

    #[test]
    fn minimises_quadratic() {
        let mut q = Quadratic {
            w: Tensor::param(&[3], vec![2.0, -1.0, 0.5]),
        };
        let mut adam = AdamState::new(AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        });
        for _ in 0..2000 {
            let (w, g) = q.w.value_and_grad_mut();
            for i in 0..3 {
                g[i] = 2.0 * w[i];
            }
            adam.step(&mut q).unwrap();
        }
        assert!(q.w.max_abs() < 1e-3, "{:?}", q.w.data());
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let mut q = Quadratic {
            w: Tensor::param(&[2], vec![0.0; 2]),
        };
        let mut adam = AdamState::new(AdamConfig::default());
        adam.m.insert("w".into(), vec![0.0; 5]);
        adam.v.insert("w".into(), vec![0.0; 5]);
        assert!(adam.step(&mut q).is_err());
    }
}
