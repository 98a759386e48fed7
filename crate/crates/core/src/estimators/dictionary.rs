use std::io::Write;
use std::path::Path;

use num_complex::Complex64;

use super::EstimatorError;
use crate::channel::{far_field_steering, near_field_steering, ArrayConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomKind {
    /// Planar-wave steering vector, parameterised by angle only.
    Angular,
    /// Spherical-wave steering vector at a given angle and distance.
    Polar,
}

impl AtomKind {
    pub fn name(self) -> &'static str {
        match self {
            AtomKind::Angular => "angular",
            AtomKind::Polar => "polar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomMeta {
    pub kind: AtomKind,
    pub phi: f64,
    /// Distance in metres; infinite for angular atoms.
    pub r: f64,
}

/// Unit-norm steering vectors stored column by column.
#[derive(Debug, Clone)]
pub struct Dictionary {
    antennas: usize,
    atoms: Vec<Complex64>,
    meta: Vec<AtomMeta>,
}

impl Dictionary {
    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn atom(&self, i: usize) -> &[Complex64] {
        &self.atoms[i * self.antennas..(i + 1) * self.antennas]
    }

    pub fn meta(&self) -> &[AtomMeta] {
        &self.meta
    }

    pub fn count(&self, kind: AtomKind) -> usize {
        self.meta.iter().filter(|m| m.kind == kind).count()
    }
}

/// Geometric ring distances `r_min·(r_max/r_min)^(i/(n−1))`.
///
/// Over `(10, 80)` with seven rings this gives 10, 14.1, 20, 28.3, 40, 56.6, 80 m.
pub fn default_distance_rings(r_range: (f64, f64), rings: usize) -> Vec<f64> {
    let (lo, hi) = r_range;
    match rings {
        0 => Vec::new(),
        1 => vec![(lo * hi).sqrt()],
        n => (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect(),
    }
}

/// Angular atoms at `sin φ = −1 + 2i/n_angles`, followed by one polar atom
/// per (angle, distance) pair, angle-major.
pub fn build_dictionary(array: &ArrayConfig, n_angles: usize, distances: &[f64]) -> Result<Dictionary, EstimatorError> {
    if n_angles == 0 {
        return Err(EstimatorError::EmptyGrid);
    }
    let m = array.antennas();
    let n = n_angles * (1 + distances.len());
    let mut dict = Dictionary {
        antennas: m,
        atoms: Vec::with_capacity(n * m),
        meta: Vec::with_capacity(n),
    };
    let angles: Vec<f64> = (0..n_angles)
        .map(|i| (-1.0 + 2.0 * i as f64 / n_angles as f64).asin())
        .collect();
    for &phi in &angles {
        dict.atoms.extend(far_field_steering(array, phi)?.0);
        dict.meta.push(AtomMeta {
            kind: AtomKind::Angular,
            phi,
            r: f64::INFINITY,
        });
    }
    for &phi in &angles {
        for &r in distances {
            dict.atoms.extend(near_field_steering(array, phi, r)?.0);
            dict.meta.push(AtomMeta {
                kind: AtomKind::Polar,
                phi,
                r,
            });
        }
    }
    Ok(dict)
}

/// CSV with columns `atom_index,kind,phi,r`.
pub fn write_dictionary_csv(dict: &Dictionary, path: &Path) -> Result<(), EstimatorError> {
    let io = |source| EstimatorError::Io {
        context: format!("writing {}", path.display()),
        source,
    };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "atom_index,kind,phi,r").map_err(io)?;
    for (i, m) in dict.meta.iter().enumerate() {
        writeln!(w, "{i},{},{},{}", m.kind.name(), m.phi, m.r).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_angular_dictionary_is_orthonormal() {
        for m in [4, 16, 64] {
            let array = ArrayConfig::new(m, 0.01).unwrap();
            let d = build_dictionary(&array, m, &[]).unwrap();
            for i in 0..m {
                for j in 0..m {
                    let g = inner(d.atom(i), d.atom(j));
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((g - Complex64::new(want, 0.0)).norm() < 1e-10, "M={m} ({i},{j}) {g}");
                }
            }
        }
    }

    #[test]
    fn atoms_are_unit_norm_and_counted() {
        let array = ArrayConfig::new(16, 0.01).unwrap();
        let rings = default_distance_rings((0.2, 2.0), 3);
        let d = build_dictionary(&array, 8, &rings).unwrap();
        assert_eq!(d.len(), 8 + 8 * 3);
        assert_eq!(d.count(AtomKind::Polar), 24);
        for i in 0..d.len() {
            let n: f64 = d.atom(i).iter().map(|z| z.norm_sqr()).sum();
            assert!((n - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn distant_polar_atom_matches_angular_atom() {
        let array = ArrayConfig::new(64, 0.01).unwrap();
        let far = 1e6 * array.rayleigh_distance();
        let d = build_dictionary(&array, 16, &[far]).unwrap();
        for i in 0..16 {
            let c = inner(d.atom(i), d.atom(16 + i)).norm();
            assert!(c > 0.9999, "{c}");
        }
    }

    #[test]
    fn full_scale_rings() {
        let r = default_distance_rings((10.0, 80.0), 7);
        let want = [10.0, 14.14, 20.0, 28.28, 40.0, 56.57, 80.0];
        for (a, b) in r.iter().zip(want) {
            assert!((a - b).abs() < 0.01);
        }
    }

    #[test]
    fn empty_grid_rejected() {
        let array = ArrayConfig::new(4, 0.01).unwrap();
        assert!(build_dictionary(&array, 0, &[1.0]).is_err());
    }
}
