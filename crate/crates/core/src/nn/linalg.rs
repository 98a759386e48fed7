//! Strided matrix views and a row-blocked, data-parallel GEMM.

use super::Scalar;
use crate::par;

/// Rows of `C` handed to one task by [`gemm`]. Fixed so that the split never
/// depends on the thread count.
const ROW_BLOCK: usize = 64;

/// Read-only strided view of a matrix.
#[derive(Debug, Clone, Copy)]
pub struct MatRef<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T: Scalar> MatRef<'a, T> {
    /// Row-major `rows × cols` matrix at the start of `data`.
    pub fn new(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self::strided(data, rows, cols, cols, 1)
    }

    /// General view: element `(i, j)` is `data[i·rs + j·cs]`.
    pub fn strided(data: &'a [T], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        if rows > 0 && cols > 0 {
            let last = (rows - 1) * rs + (cols - 1) * cs;
            assert!(last < data.len(), "matrix view out of bounds ({last} >= {})", data.len());
        }
        MatRef {
            data,
            rows,
            cols,
            rs,
            cs,
        }
    }

    pub fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.rs + j * self.cs]
    }

    fn row_range(self, start: usize, len: usize) -> Self {
        let off = start * self.rs;
        MatRef {
            data: &self.data[off..],
            rows: len,
            cols: self.cols,
            rs: self.rs,
            cs: self.cs,
        }
    }
}

/// Mutable strided view of a matrix.
#[derive(Debug)]
pub struct MatMut<'a, T> {
    data: &'a mut [T],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T: Scalar> MatMut<'a, T> {
    pub fn new(data: &'a mut [T], rows: usize, cols: usize) -> Self {
        Self::strided(data, rows, cols, cols, 1)
    }

    pub fn strided(data: &'a mut [T], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        if rows > 0 && cols > 0 {
            let last = (rows - 1) * rs + (cols - 1) * cs;
            assert!(last < data.len(), "matrix view out of bounds ({last} >= {})", data.len());
        }
        MatMut {
            data,
            rows,
            cols,
            rs,
            cs,
        }
    }
}

/// Single-threaded `C ← α·A·B + β·C`.
pub fn gemm_serial<T: Scalar>(alpha: T, a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, c: MatMut<'_, T>) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert_eq!(a.rows, c.rows, "row counts differ");
    assert_eq!(b.cols, c.cols, "column counts differ");
    if c.rows == 0 || c.cols == 0 {
        return;
    }
    if a.cols == 0 {
        // Empty inner product: only the β scaling applies.
        for i in 0..c.rows {
            for j in 0..c.cols {
                let x = &mut c.data[i * c.rs + j * c.cs];
                *x = if beta == T::zero() { T::zero() } else { *x * beta };
            }
        }
        return;
    }
    // SAFETY: all three views were bounds-checked on construction and `c` is
    // a unique borrow, so it cannot alias `a` or `b`.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

/// `C ← α·A·B + β·C` for a contiguous row-major `C`, split into fixed
/// blocks of rows that run in parallel. Each output element is produced by
/// the same instruction sequence regardless of scheduling.
pub fn gemm<T: Scalar>(alpha: T, a: MatRef<'_, T>, b: MatRef<'_, T>, beta: T, c: &mut [T]) {
    let (m, n) = (a.rows, b.cols);
    assert_eq!(c.len(), m * n, "output buffer has wrong length");
    if m <= ROW_BLOCK || n == 0 {
        gemm_serial(alpha, a, b, beta, MatMut::new(c, m, n));
        return;
    }
    par::for_each_chunk_mut(c, ROW_BLOCK * n, |blk, chunk| {
        let start = blk * ROW_BLOCK;
        let rows = chunk.len() / n;
        gemm_serial(alpha, a.row_range(start, rows), b, beta, MatMut::new(chunk, rows, n));
    });
}

/// Convenience: `A·B` into a fresh buffer.
pub fn matmul<T: Scalar>(a: MatRef<'_, T>, b: MatRef<'_, T>) -> Vec<T> {
    let mut c = vec![T::zero(); a.rows * b.cols];
    gemm(T::one(), a, b, T::zero(), &mut c);
    c
}
