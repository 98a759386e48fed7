use num_complex::Complex64;

use super::array::square_side;
use super::{ChannelError, ComplexChannel};

/// Real `(√M, √M, 2)` representation of a complex channel.
///
/// Antenna `m` maps to row `m / √M`, column `m % √M`; channel 0 holds the
/// real part and channel 1 the imaginary part. Storage is row-major with the
/// channel index fastest, i.e. element `(i, j, c)` lives at
/// `(i·√M + j)·2 + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealTensor {
    side: usize,
    data: Vec<f64>,
}

impl RealTensor {
    pub fn from_vec(side: usize, data: Vec<f64>) -> Result<Self, ChannelError> {
        if data.len() != side * side * 2 {
            return Err(ChannelError::LengthMismatch {
                expected: side * side * 2,
                actual: data.len(),
            });
        }
        Ok(RealTensor { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.side, self.side, 2]
    }

    pub fn get(&self, row: usize, col: usize, plane: usize) -> f64 {
        self.data[(row * self.side + col) * 2 + plane]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}

/// Splits `h` into real and imaginary planes of a `(√M, √M, 2)` tensor.
pub fn pack_real(h: &ComplexChannel) -> Result<RealTensor, ChannelError> {
    let side = square_side(h.len()).ok_or(ChannelError::NotSquare(h.len()))?;
    let data = h.as_slice().iter().flat_map(|z| [z.re, z.im]).collect();
    Ok(RealTensor { side, data })
}

/// Inverse of [`pack_real`].
pub fn unpack_real(t: &RealTensor) -> ComplexChannel {
    ComplexChannel(t.data.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn four_antenna_layout() {
        let h = ComplexChannel(vec![
            Complex64::new(1.0, 2.0),
            Complex64::new(3.0, 4.0),
            Complex64::new(5.0, 6.0),
            Complex64::new(7.0, 8.0),
        ]);
        let t = pack_real(&h).unwrap();
        assert_eq!(t.shape(), [2, 2, 2]);
        let plane = |c| [[t.get(0, 0, c), t.get(0, 1, c)], [t.get(1, 0, c), t.get(1, 1, c)]];
        assert_eq!(plane(0), [[1.0, 3.0], [5.0, 7.0]]);
        assert_eq!(plane(1), [[2.0, 4.0], [6.0, 8.0]]);
    }

    #[test]
    fn non_square_is_rejected() {
        assert!(matches!(pack_real(&ComplexChannel::zeros(6)), Err(ChannelError::NotSquare(6))));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(side in 1usize..6, seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let h = ComplexChannel((0..side * side)
                .map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() * 1e3))
                .collect());
            let back = unpack_real(&pack_real(&h).unwrap());
            prop_assert_eq!(back, h);
        }
    }
}
