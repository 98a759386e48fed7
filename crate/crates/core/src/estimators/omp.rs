use num_complex::Complex64;

use super::dictionary::inner;
use super::{AtomKind, Dictionary, EstimatorError};
use crate::channel::ComplexChannel;

/// Outcome of a greedy recovery.
#[derive(Debug, Clone)]
pub struct OmpResult {
    /// Projection of the observation onto the selected atoms.
    pub channel: ComplexChannel,
    /// Selected atom indices in selection order.
    pub support: Vec<usize>,
    /// Residual norm before the first and after every selection.
    pub residual_norms: Vec<f64>,
}

/// Orthogonal component below this fraction of the atom norm counts as
/// linearly dependent on the current support.
const DEPENDENCE_TOL: f64 = 1e-10;

struct Greedy<'a> {
    dict: &'a Dictionary,
    /// Orthonormal basis of the selected atoms' span.
    basis: Vec<Vec<Complex64>>,
    residual: Vec<Complex64>,
    excluded: Vec<bool>,
    result: OmpResult,
}

impl<'a> Greedy<'a> {
    fn new(dict: &'a Dictionary, y: &ComplexChannel) -> Self {
        let residual = y.as_slice().to_vec();
        let norm = l2(&residual);
        Greedy {
            dict,
            basis: Vec::new(),
            residual,
            excluded: vec![false; dict.len()],
            result: OmpResult {
                channel: ComplexChannel::zeros(y.len()),
                support: Vec::new(),
                residual_norms: vec![norm],
            },
        }
    }

    /// Adds up to `k` atoms of `kind` (any kind when `None`).
    fn run(&mut self, k: usize, kind: Option<AtomKind>) {
        let mut added = 0;
        while added < k {
            let mut best: Option<(usize, f64)> = None;
            for (i, meta) in self.dict.meta().iter().enumerate() {
                if self.excluded[i] || kind.is_some_and(|want| meta.kind != want) {
                    continue;
                }
                let c = inner(self.dict.atom(i), &self.residual).norm();
                // Strict comparison keeps the lowest index on ties.
                if best.is_none_or(|(_, b)| c > b) {
                    best = Some((i, c));
                }
            }
            let Some((idx, _)) = best else { break };
            self.excluded[idx] = true;
            if self.add_atom(idx) {
                added += 1;
            }
        }
    }

    /// Orthogonalises atom `idx` against the basis (twice, for stability) and
    /// updates the residual. Returns false if the atom is dependent.
    fn add_atom(&mut self, idx: usize) -> bool {
        let atom = self.dict.atom(idx);
        let mut q = atom.to_vec();
        for _ in 0..2 {
            for b in &self.basis {
                let c = inner(b, &q);
                for (qi, bi) in q.iter_mut().zip(b) {
                    *qi -= c * bi;
                }
            }
        }
        let n = l2(&q);
        if n <= DEPENDENCE_TOL * l2(atom) {
            return false;
        }
        q.iter_mut().for_each(|z| *z /= n);
        let c = inner(&q, &self.residual);
        for ((r, h), qi) in self.residual.iter_mut().zip(self.result.channel.0.iter_mut()).zip(&q) {
            *r -= c * qi;
            *h += c * qi;
        }
        self.basis.push(q);
        self.result.support.push(idx);
        self.result.residual_norms.push(l2(&self.residual));
        true
    }
}

fn l2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn check(dict: &Dictionary, y: &ComplexChannel, k: usize, available: usize) -> Result<(), EstimatorError> {
    if y.len() != dict.antennas() {
        return Err(EstimatorError::LengthMismatch {
            expected: dict.antennas(),
            actual: y.len(),
        });
    }
    if k > available {
        return Err(EstimatorError::InvalidSparsity { k, available });
    }
    Ok(())
}

/// Standard OMP on the LS estimate `y` with `k` atoms from the whole dictionary.
pub fn omp(y: &ComplexChannel, dict: &Dictionary, k: usize) -> Result<OmpResult, EstimatorError> {
    check(dict, y, k, dict.len())?;
    let mut g = Greedy::new(dict, y);
    g.run(k, None);
    Ok(g.result)
}

/// OMP limited to atoms of one kind.
pub fn omp_restricted(y: &ComplexChannel, dict: &Dictionary, k: usize, kind: AtomKind) -> Result<OmpResult, EstimatorError> {
    check(dict, y, k, dict.count(kind))?;
    let mut g = Greedy::new(dict, y);
    g.run(k, Some(kind));
    Ok(g.result)
}

/// Hybrid-field OMP: `k_far` angular atoms, then `k_near` polar atoms, all
/// jointly re-fitted.
pub fn hybrid_omp(y: &ComplexChannel, dict: &Dictionary, k_far: usize, k_near: usize) -> Result<OmpResult, EstimatorError> {
    check(dict, y, k_far, dict.count(AtomKind::Angular))?;
    check(dict, y, k_near, dict.count(AtomKind::Polar))?;
    let mut g = Greedy::new(dict, y);
    g.run(k_far, Some(AtomKind::Angular));
    g.run(k_near, Some(AtomKind::Polar));
    Ok(g.result)
}
