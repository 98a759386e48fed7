use super::HarnessError;
use crate::nn::{Scalar, Tensor};

/// Batch mean of squared Frobenius errors and its gradient with respect to
/// `pred`.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>), HarnessError> {
    if pred.shape() != target.shape() || pred.shape().is_empty() {
        return Err(HarnessError::Config(format!(
            "prediction shape {:?} differs from target shape {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.shape()[0].max(1) as f64;
    let mut loss = 0.0f64;
    let scale = T::of(2.0 / n);
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            loss += d.as_f64() * d.as_f64();
            d * scale
        })
        .collect();
    Ok((loss / n, Tensor::from_vec(pred.shape(), grad)?))
}

/// Converts a linear ratio to decibels.
pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Running NMSE statistics over samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NmseStats {
    sum_ratio: f64,
    sum_ratio_sq: f64,
    sum_err: f64,
    sum_sig: f64,
    pub count: usize,
    /// Samples skipped because the target had zero energy.
    pub excluded: usize,
}

impl NmseStats {
    pub fn push(&mut self, err_energy: f64, signal_energy: f64) {
        if signal_energy <= 0.0 {
            self.excluded += 1;
            return;
        }
        let r = err_energy / signal_energy;
        self.sum_ratio += r;
        self.sum_ratio_sq += r * r;
        self.sum_err += err_energy;
        self.sum_sig += signal_energy;
        self.count += 1;
    }

    /// Adds `pred` against `target`, both as flat real or complex-packed slices.
    pub fn push_pair(&mut self, pred: &[f64], target: &[f64]) {
        let err = pred.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        let sig = target.iter().map(|b| b * b).sum();
        self.push(err, sig);
    }

    /// Sample mean of per-sample ratios, `E{‖h − ĥ‖² / ‖h‖²}`.
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.sum_ratio / self.count as f64
    }

    pub fn mean_db(&self) -> f64 {
        db(self.mean())
    }

    /// `Σ‖h − ĥ‖² / Σ‖h‖²`.
    pub fn ratio_of_sums(&self) -> f64 {
        self.sum_err / self.sum_sig
    }

    /// Half-width of the normal-approximation 95% interval of the mean.
    pub fn ci95_halfwidth(&self) -> f64 {
        if self.count < 2 {
            return f64::INFINITY;
        }
        let n = self.count as f64;
        let var = ((self.sum_ratio_sq - self.sum_ratio * self.sum_ratio / n) / (n - 1.0)).max(0.0);
        1.96 * (var / n).sqrt()
    }

    /// The same interval mapped to dB by the delta method.
    pub fn ci95_halfwidth_db(&self) -> f64 {
        10.0 / std::f64::consts::LN_10 * self.ci95_halfwidth() / self.mean()
    }

    pub fn merge(&mut self, other: &NmseStats) {
        self.sum_ratio += other.sum_ratio;
        self.sum_ratio_sq += other.sum_ratio_sq;
        self.sum_err += other.sum_err;
        self.sum_sig += other.sum_sig;
        self.count += other.count;
        self.excluded += other.excluded;
    }
}

/// NMSE of predictions against targets, one `[N, ...]` batch each.
pub fn nmse<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<NmseStats, HarnessError> {
    if pred.shape() != target.shape() || pred.shape().is_empty() {
        return Err(HarnessError::Config("NMSE needs equally shaped batches".into()));
    }
    let per = pred.len() / pred.shape()[0].max(1);
    let mut stats = NmseStats::default();
    if per == 0 {
        return Ok(stats);
    }
    for (p, t) in pred.data().chunks(per).zip(target.data().chunks(per)) {
        let err = p.iter().zip(t).map(|(&a, &b)| (a.as_f64() - b.as_f64()).powi(2)).sum();
        let sig = t.iter().map(|&b| b.as_f64().powi(2)).sum();
        stats.push(err, sig);
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::grad_check;

    #[test]
    fn loss_values() {
        let t = Tensor::<f64>::from_vec(&[1, 2, 2, 2], vec![0.5; 8]).unwrap();
        assert_eq!(mse_loss(&t, &t).unwrap().0, 0.0);
        // M = 4: an all-ones difference has squared norm 2M = 8.
        let p = t.map(|v| v + 1.0);
        assert!((mse_loss(&p, &t).unwrap().0 - 8.0).abs() < 1e-15);
    }

    #[test]
    fn loss_gradient_check() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let p = Tensor::<f64>::uniform(&[3, 2, 2, 2], 1.0, &mut rng);
        let t = Tensor::<f64>::uniform(&[3, 2, 2, 2], 1.0, &mut rng);
        let (_, g) = mse_loss(&p, &t).unwrap();
        let rep = grad_check(
            p.data(),
            g.data(),
            |v| mse_loss(&Tensor::from_vec(&[3, 2, 2, 2], v.to_vec()).unwrap(), &t).unwrap().0,
            1e-6,
        );
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn nmse_reference_values() {
        let t = Tensor::<f64>::from_vec(&[2, 2], vec![1.0, 2.0, -3.0, 0.5]).unwrap();
        assert_eq!(nmse(&t, &t).unwrap().mean(), 0.0);
        let z = Tensor::<f64>::zeros(&[2, 2]);
        let s = nmse(&z, &t).unwrap();
        assert!((s.mean() - 1.0).abs() < 1e-15);
        assert!(s.mean_db().abs() < 1e-12);
    }

    #[test]
    fn mean_of_ratios_differs_from_ratio_of_sums() {
        let mut s = NmseStats::default();
        s.push(1.0, 1.0);
        s.push(1.0, 9.0);
        assert!((s.mean() - (1.0 + 1.0 / 9.0) / 2.0).abs() < 1e-15);
        assert!((s.ratio_of_sums() - 0.2).abs() < 1e-15);
        s.push(1.0, 0.0);
        assert_eq!((s.count, s.excluded), (2, 1));
    }

    #[test]
    fn shape_mismatch() {
        let a = Tensor::<f64>::zeros(&[2, 2]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        assert!(mse_loss(&a, &b).is_err());
        assert!(nmse(&a, &b).is_err());
    }
}
