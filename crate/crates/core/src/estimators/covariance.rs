use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::EstimatorError;
use crate::channel::ComplexChannel;

pub const COVARIANCE_MAGIC: &[u8; 4] = b"XLCV";

/// Empirical channel covariance `R = (1/N)·Σ h hᴴ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceModel {
    pub r: DMatrix<Complex64>,
    /// Samples behind the estimate; zero when loaded from disk.
    pub sample_count: usize,
}

impl CovarianceModel {
    pub fn antennas(&self) -> usize {
        self.r.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.r.diagonal().iter().map(|z| z.re).sum()
    }

    /// Largest `|R − Rᴴ|` entry.
    pub fn hermitian_error(&self) -> f64 {
        let m = self.antennas();
        let mut worst = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                worst = worst.max((self.r[(i, j)] - self.r[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let h = (&self.r + self.r.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }
}

/// Fits `R` from sample channels and symmetrises it.
pub fn fit_covariance<'a, I>(channels: I) -> Result<CovarianceModel, EstimatorError>
where
    I: IntoIterator<Item = &'a ComplexChannel>,
{
    let mut acc: Option<DMatrix<Complex64>> = None;
    let mut n = 0usize;
    for h in channels {
        let m = h.len();
        let r = acc.get_or_insert_with(|| DMatrix::zeros(m, m));
        if r.nrows() != m {
            return Err(EstimatorError::LengthMismatch {
                expected: r.nrows(),
                actual: m,
            });
        }
        let v = h.as_slice();
        for j in 0..m {
            let cj = v[j].conj();
            for i in 0..m {
                r[(i, j)] += v[i] * cj;
            }
        }
        n += 1;
    }
    let r = acc.ok_or(EstimatorError::EmptySamples)?;
    let r = (&r + r.adjoint()) * Complex64::new(0.5 / n as f64, 0.0);
    Ok(CovarianceModel { r, sample_count: n })
}

fn io(context: &'static str) -> impl FnOnce(std::io::Error) -> EstimatorError {
    move |source| EstimatorError::Io {
        context: context.to_string(),
        source,
    }
}

/// `XLCV`, `u32` M, then `M²` complex entries as `f64` pairs, row-major.
pub fn write_covariance_to<W: Write>(cov: &CovarianceModel, mut w: W) -> Result<(), EstimatorError> {
    let m = cov.antennas();
    let mut buf = Vec::with_capacity(8 + 16 * m * m);
    buf.extend_from_slice(COVARIANCE_MAGIC);
    buf.extend_from_slice(&(m as u32).to_le_bytes());
    for i in 0..m {
        for j in 0..m {
            let z = cov.r[(i, j)];
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
    }
    w.write_all(&buf).map_err(io("writing covariance"))
}

pub fn read_covariance_from<R: Read>(mut r: R) -> Result<CovarianceModel, EstimatorError> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(io("reading covariance"))?;
    if buf.len() < 8 || &buf[..4] != COVARIANCE_MAGIC {
        return Err(EstimatorError::Format("bad magic".into()));
    }
    let m = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes")) as usize;
    if buf.len() != 8 + 16 * m * m {
        return Err(EstimatorError::Format(format!(
            "expected {} bytes for M = {m}, found {}",
            8 + 16 * m * m,
            buf.len()
        )));
    }
    let f = |k: usize| f64::from_le_bytes(buf[8 + 8 * k..16 + 8 * k].try_into().expect("8 bytes"));
    let r = DMatrix::from_fn(m, m, |i, j| {
        let k = 2 * (i * m + j);
        Complex64::new(f(k), f(k + 1))
    });
    Ok(CovarianceModel { r, sample_count: 0 })
}

pub fn write_covariance(cov: &CovarianceModel, path: &Path) -> Result<(), EstimatorError> {
    let f = std::fs::File::create(path).map_err(io("creating covariance file"))?;
    let mut w = std::io::BufWriter::new(f);
    write_covariance_to(cov, &mut w)?;
    w.flush().map_err(io("writing covariance"))
}

pub fn read_covariance(path: &Path) -> Result<CovarianceModel, EstimatorError> {
    let f = std::fs::File::open(path).map_err(io("opening covariance file"))?;
    read_covariance_from(std::io::BufReader::new(f))
}
