use super::ChannelError;

/// Geometry of a half-wavelength (by default) uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayConfig {
    antennas: usize,
    wavelength: f64,
    spacing: f64,
}

impl ArrayConfig {
    /// Array with half-wavelength spacing.
    pub fn new(antennas: usize, wavelength: f64) -> Result<Self, ChannelError> {
        Self::with_spacing(antennas, wavelength, wavelength / 2.0)
    }

    pub fn with_spacing(antennas: usize, wavelength: f64, spacing: f64) -> Result<Self, ChannelError> {
        if antennas == 0 {
            return Err(ChannelError::InvalidArray("antenna count must be positive".into()));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(ChannelError::InvalidArray(format!("wavelength must be positive, got {wavelength}")));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(ChannelError::InvalidArray(format!("antenna spacing must be positive, got {spacing}")));
        }
        Ok(ArrayConfig {
            antennas,
            wavelength,
            spacing,
        })
    }

    /// Number of antennas `M`.
    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// `√M`, or an error when `M` is not a perfect square.
    pub fn side(&self) -> Result<usize, ChannelError> {
        square_side(self.antennas).ok_or(ChannelError::NotSquare(self.antennas))
    }

    /// Boundary between the near- and far-field regions, in meters.
    pub fn rayleigh_distance(&self) -> f64 {
        let aperture = self.antennas as f64 * self.spacing;
        2.0 * aperture * aperture / self.wavelength
    }
}

pub(crate) fn square_side(m: usize) -> Option<usize> {
    let s = (m as f64).sqrt().round() as usize;
    (s * s == m && m > 0).then_some(s)
}

/// Rayleigh distance `2·D_a²/λ` with aperture `D_a = M·d`.
///
/// For `d = λ/2` this is `M²·λ/2`.
pub fn rayleigh_distance(antennas: usize, wavelength: f64, spacing: f64) -> Result<f64, ChannelError> {
    Ok(ArrayConfig::with_spacing(antennas, wavelength, spacing)?.rayleigh_distance())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_scale_rayleigh_distance() {
        let d = rayleigh_distance(256, 0.01, 0.005).unwrap();
        assert!((d - 327.68).abs() <= 327.68 * f64::EPSILON * 4.0, "{d}");
    }

    #[test]
    fn two_antenna_rayleigh_distance() {
        assert_eq!(rayleigh_distance(2, 1.0, 0.5).unwrap(), 2.0);
    }

    #[test]
    fn rejects_invalid_geometry() {
        assert!(rayleigh_distance(0, 0.01, 0.005).is_err());
        assert!(rayleigh_distance(4, 0.0, 0.005).is_err());
        assert!(rayleigh_distance(4, 0.01, -1.0).is_err());
    }

    #[test]
    fn side_requires_square() {
        assert_eq!(ArrayConfig::new(64, 0.01).unwrap().side().unwrap(), 8);
        assert!(matches!(ArrayConfig::new(6, 0.01).unwrap().side(), Err(ChannelError::NotSquare(6))));
    }
}
