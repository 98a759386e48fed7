use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;

use super::{ArrayConfig, ChannelError, ComplexChannel};

fn check_angle(phi: f64) -> Result<(), ChannelError> {
    // Allow a few ulps of slack so that ±π/2 computed in floating point passes.
    let lim = FRAC_PI_2 * (1.0 + 4.0 * f64::EPSILON);
    if !(phi.is_finite() && phi.abs() <= lim) {
        return Err(ChannelError::InvalidPath(format!("azimuth {phi} outside [-π/2, π/2]")));
    }
    Ok(())
}

/// Planar-wavefront array response `a(φ)`.
///
/// Entry `m` (zero-based) is `exp(-j·2π·(d/λ)·m·sin φ) / √M`.
pub fn far_field_steering(array: &ArrayConfig, phi: f64) -> Result<ComplexChannel, ChannelError> {
    check_angle(phi)?;
    let m = array.antennas();
    let norm = 1.0 / (m as f64).sqrt();
    let step = -2.0 * PI * array.spacing() / array.wavelength() * phi.sin();
    Ok(ComplexChannel(
        (0..m).map(|i| Complex64::from_polar(norm, step * i as f64)).collect(),
    ))
}

/// Spherical-wavefront array response `a(φ, r)` for a scatterer at distance
/// `r` from the array centre.
///
/// Antenna `m` sits at offset `δ_m·d` from the centre with
/// `δ_m = (2m − M + 1)/2`. Its distance to the scatterer is
/// `r_m = √(r² + δ_m²d² + 2·r·δ_m·d·sin φ)`, oriented so that the phase
/// progression across the array matches [`far_field_steering`]. Phases are
/// referenced to the first antenna, so entry `m` is
/// `exp(-j·2π·(r_m − r_0)/λ) / √M` and the vector tends to `a(φ)` entrywise
/// as `r → ∞`.
pub fn near_field_steering(array: &ArrayConfig, phi: f64, r: f64) -> Result<ComplexChannel, ChannelError> {
    check_angle(phi)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(ChannelError::InvalidPath(format!("near-field distance must be positive, got {r}")));
    }
    let m = array.antennas();
    let d = array.spacing();
    let k = 2.0 * PI / array.wavelength();
    let norm = 1.0 / (m as f64).sqrt();
    let s = phi.sin();
    let offset = |i: usize| (2.0 * i as f64 - m as f64 + 1.0) / 2.0 * d;
    // r_m − r_0 computed as a difference of squares over a sum, which keeps
    // full precision when r is many orders of magnitude above the aperture.
    let excess = |x: f64| {
        let sq = x * x + 2.0 * r * x * s;
        sq / ((r * r + sq).sqrt() + r)
    };
    let ref_excess = excess(offset(0));
    Ok(ComplexChannel(
        (0..m)
            .map(|i| Complex64::from_polar(norm, -k * (excess(offset(i)) - ref_excess)))
            .collect(),
    ))
}
