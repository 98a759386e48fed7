use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{CovarianceModel, EstimatorError};
use crate::channel::{ls_estimate, ComplexChannel, SignalConfig};

/// Precomputed LMMSE filter `W = R·(R + (σ²/P)·I)⁻¹` for one noise level.
#[derive(Debug, Clone)]
pub struct LmmseFilter {
    /// `None` at zero noise, where the estimate is the LS estimate itself.
    w: Option<DMatrix<Complex64>>,
    antennas: usize,
}

impl LmmseFilter {
    pub fn new(cov: &CovarianceModel, sig: &SignalConfig) -> Result<Self, EstimatorError> {
        let m = cov.antennas();
        let ratio = sig.noise_variance / sig.pilot_power;
        if ratio == 0.0 {
            return Ok(LmmseFilter { w: None, antennas: m });
        }
        let mut a = cov.r.clone();
        for i in 0..m {
            a[(i, i)] += Complex64::new(ratio, 0.0);
        }
        let chol = a.clone().cholesky().or_else(|| {
            let ridge = 1e-10 * cov.trace() / m as f64;
            for i in 0..m {
                a[(i, i)] += Complex64::new(ridge, 0.0);
            }
            a.cholesky()
        });
        let chol = chol.ok_or(EstimatorError::Singular)?;
        // A and R are Hermitian, so W = R·A⁻¹ = (A⁻¹·R)ᴴ.
        let w = chol.solve(&cov.r).adjoint();
        Ok(LmmseFilter { w: Some(w), antennas: m })
    }

    /// Applies the filter to the LS estimate `ĥ_LS`.
    pub fn apply(&self, ls: &ComplexChannel) -> Result<ComplexChannel, EstimatorError> {
        if ls.len() != self.antennas {
            return Err(EstimatorError::LengthMismatch {
                expected: self.antennas,
                actual: ls.len(),
            });
        }
        Ok(match &self.w {
            None => ls.clone(),
            Some(w) => {
                let v = DVector::from_column_slice(ls.as_slice());
                ComplexChannel((w * v).iter().copied().collect())
            }
        })
    }
}

/// `ĥ = R·(R + (σ²/P)·I)⁻¹·(y/√P)`.
pub fn lmmse_estimate(
    y: &ComplexChannel,
    sig: &SignalConfig,
    cov: &CovarianceModel,
) -> Result<ComplexChannel, EstimatorError> {
    let ls = ls_estimate(y, sig)?;
    LmmseFilter::new(cov, sig)?.apply(&ls)
}
