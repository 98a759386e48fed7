use rand::Rng;

use super::{complex_gaussian, ChannelError, ComplexChannel};

/// Pilot power and receiver noise of the single-pilot uplink `y = √P·h + η`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalConfig {
    pub pilot_power: f64,
    /// Per-antenna variance of the circularly-symmetric noise `η`.
    pub noise_variance: f64,
}

impl SignalConfig {
    pub fn new(pilot_power: f64, noise_variance: f64) -> Result<Self, ChannelError> {
        if !(pilot_power > 0.0 && pilot_power.is_finite()) {
            return Err(ChannelError::InvalidPower(pilot_power));
        }
        if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
            return Err(ChannelError::InvalidConfig(format!(
                "noise variance must be non-negative, got {noise_variance}"
            )));
        }
        Ok(SignalConfig {
            pilot_power,
            noise_variance,
        })
    }

    /// Unit pilot power with noise variance `10^(−snr/10)`.
    pub fn from_snr_db(snr_db: f64) -> Self {
        SignalConfig {
            pilot_power: 1.0,
            noise_variance: 10f64.powf(-snr_db / 10.0),
        }
    }

    pub fn noiseless() -> Self {
        SignalConfig {
            pilot_power: 1.0,
            noise_variance: 0.0,
        }
    }

    /// `10·log10(P/σ²)`; infinite for a noiseless link.
    pub fn snr_db(&self) -> f64 {
        10.0 * (self.pilot_power / self.noise_variance).log10()
    }

    /// Noise-to-signal ratio `σ²/P` seen by an estimate `y/√P`.
    pub fn effective_noise(&self) -> f64 {
        self.noise_variance / self.pilot_power
    }
}

/// Observation `y = √P·h + η` with i.i.d. `CN(0, σ²)` noise per antenna.
pub fn received_signal<R: Rng + ?Sized>(h: &ComplexChannel, sig: &SignalConfig, rng: &mut R) -> ComplexChannel {
    let amp = sig.pilot_power.sqrt();
    ComplexChannel(
        h.as_slice()
            .iter()
            .map(|z| {
                let noise = if sig.noise_variance > 0.0 {
                    complex_gaussian(rng, sig.noise_variance)
                } else {
                    Default::default()
                };
                z * amp + noise
            })
            .collect(),
    )
}

/// Least-squares estimate `ĥ = y/√P`.
pub fn ls_estimate(y: &ComplexChannel, sig: &SignalConfig) -> Result<ComplexChannel, ChannelError> {
    if !(sig.pilot_power > 0.0) {
        return Err(ChannelError::InvalidPower(sig.pilot_power));
    }
    Ok(y.scale(1.0 / sig.pilot_power.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, Stream};
    use num_complex::Complex64;

    #[test]
    fn noiseless_ls_inverts_observation() {
        let h = ComplexChannel(vec![Complex64::new(0.3, -1.2), Complex64::new(2.0, 0.5)]);
        let sig = SignalConfig::new(2.5, 0.0).unwrap();
        let mut rng = stream_rng(0, Stream::Test);
        let y = received_signal(&h, &sig, &mut rng);
        let est = ls_estimate(&y, &sig).unwrap();
        for (a, b) in est.as_slice().iter().zip(h.as_slice()) {
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_channel_observes_pure_noise() {
        let h = ComplexChannel::zeros(8);
        let sig = SignalConfig::new(3.0, 1.0).unwrap();
        let mut a = stream_rng(5, Stream::Test);
        let mut b = stream_rng(5, Stream::Test);
        let y = received_signal(&h, &sig, &mut a);
        let noise: Vec<Complex64> = (0..8).map(|_| super::super::complex_gaussian(&mut b, 1.0)).collect();
        assert_eq!(y.0, noise);
    }

    #[test]
    fn scalar_division() {
        let mut y = ComplexChannel::zeros(4);
        y.0[0] = Complex64::new(2.0, 2.0);
        let est = ls_estimate(&y, &SignalConfig::new(4.0, 0.1).unwrap()).unwrap();
        assert_eq!(est.0[0], Complex64::new(1.0, 1.0));
        assert_eq!(est.0[1], Complex64::new(0.0, 0.0));
    }

    #[test]
    fn rejects_non_positive_power() {
        assert!(SignalConfig::new(0.0, 1.0).is_err());
        let bad = SignalConfig {
            pilot_power: -1.0,
            noise_variance: 1.0,
        };
        assert!(ls_estimate(&ComplexChannel::zeros(2), &bad).is_err());
    }

    #[test]
    fn snr_roundtrip() {
        let s = SignalConfig::from_snr_db(7.5);
        assert!((s.snr_db() - 7.5).abs() < 1e-12);
    }
}
