use num_complex::Complex64;
use rand::Rng;

use super::{complex_gaussian, far_field_steering, near_field_steering, ArrayConfig, ChannelError, ComplexChannel};

/// Propagation regime of a single path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldKind {
    FarField,
    /// Spherical wavefront from a scatterer at `distance` meters.
    NearField { distance: f64 },
}

/// Gain and geometry of one propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathParams {
    pub gain: Complex64,
    /// Azimuth in radians, within `[-π/2, π/2]`.
    pub phi: f64,
    pub field: FieldKind,
}

impl PathParams {
    pub fn far(gain: Complex64, phi: f64) -> Self {
        PathParams {
            gain,
            phi,
            field: FieldKind::FarField,
        }
    }

    pub fn near(gain: Complex64, phi: f64, distance: f64) -> Self {
        PathParams {
            gain,
            phi,
            field: FieldKind::NearField { distance },
        }
    }

    pub fn is_far(&self) -> bool {
        matches!(self.field, FieldKind::FarField)
    }

    /// Unit-norm array response of this path.
    pub fn steering(&self, array: &ArrayConfig) -> Result<ComplexChannel, ChannelError> {
        match self.field {
            FieldKind::FarField => far_field_steering(array, self.phi),
            FieldKind::NearField { distance } => near_field_steering(array, self.phi, distance),
        }
    }
}

/// Statistical description of a hybrid-field channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelConfig {
    pub array: ArrayConfig,
    /// Total number of paths `L`.
    pub paths: usize,
    /// Number of far-field paths `L0`.
    pub far_paths: usize,
    /// Per-path gain variance `σ²`.
    pub gain_variance: f64,
    /// Near-field scatterer distances are drawn uniformly from this range.
    pub r_range: (f64, f64),
}

impl ChannelConfig {
    pub fn new(array: ArrayConfig, paths: usize, far_paths: usize, r_range: (f64, f64)) -> Result<Self, ChannelError> {
        let cfg = ChannelConfig {
            array,
            paths,
            far_paths,
            gain_variance: 1.0,
            r_range,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if self.paths == 0 {
            return Err(ChannelError::InvalidConfig("path count L must be at least 1".into()));
        }
        if self.far_paths > self.paths {
            return Err(ChannelError::InvalidConfig(format!(
                "far-field path count {} exceeds total {}",
                self.far_paths, self.paths
            )));
        }
        if !(self.gain_variance >= 0.0 && self.gain_variance.is_finite()) {
            return Err(ChannelError::InvalidConfig("gain variance must be non-negative".into()));
        }
        let (lo, hi) = self.r_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(ChannelError::InvalidConfig(format!(
                "near-field distance range ({lo}, {hi}) must satisfy 0 < min < max"
            )));
        }
        Ok(())
    }
}

/// Draws `L0` far-field paths followed by `L − L0` near-field paths.
///
/// Gains are i.i.d. `CN(0, σ²)`, azimuths uniform on `[-π/2, π/2]` and
/// near-field distances uniform on `r_range`.
pub fn sample_paths<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> Vec<PathParams> {
    use std::f64::consts::FRAC_PI_2;
    (0..cfg.paths)
        .map(|l| {
            let gain = complex_gaussian(rng, cfg.gain_variance);
            let phi = rng.random_range(-FRAC_PI_2..=FRAC_PI_2);
            if l < cfg.far_paths {
                PathParams::far(gain, phi)
            } else {
                let r = rng.random_range(cfg.r_range.0..cfg.r_range.1);
                PathParams::near(gain, phi, r)
            }
        })
        .collect()
}

/// Hybrid-field channel `h = √(M/L)·Σ_l g_l·a_l`.
pub fn generate_channel(paths: &[PathParams], array: &ArrayConfig) -> Result<ComplexChannel, ChannelError> {
    if paths.is_empty() {
        return Err(ChannelError::EmptyPaths);
    }
    let m = array.antennas();
    let scale = (m as f64 / paths.len() as f64).sqrt();
    let mut h = vec![Complex64::new(0.0, 0.0); m];
    for p in paths {
        let a = p.steering(array)?;
        let g = p.gain * scale;
        for (hm, am) in h.iter_mut().zip(a.as_slice()) {
            *hm += g * am;
        }
    }
    Ok(ComplexChannel(h))
}
