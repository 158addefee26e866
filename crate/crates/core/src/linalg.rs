//! Small dense-matrix kernels.
//!
//! Only what the estimator needs: a row-major matrix, a Gram product and a
//! cache-blocked product of strictly upper triangular matrices. Nothing here
//! calls out to BLAS.

use crate::error::{Error, Result};

/// Edge length of the square tiles used by the blocked kernels.
const BLOCK: usize = 128;

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a matrix from row-major data.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::invalid(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from a slice of equal-length rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::invalid(format!(
                    "row {i} has {} entries, expected {cols}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![1.0; n])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0 || self.cols == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    pub fn scale(&mut self, c: f64) {
        self.data.iter_mut().for_each(|x| *x *= c);
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// General product `self * rhs`, blocked over the shared dimension.
    pub fn matmul(&self, rhs: &Matrix) -> Result<Matrix> {
        if self.cols != rhs.rows {
            return Err(Error::invalid(format!(
                "shape mismatch: {}x{} times {}x{}",
                self.rows, self.cols, rhs.rows, rhs.cols
            )));
        }
        let (m, n) = (self.rows, rhs.cols);
        let mut out = Matrix::zeros(m, n);
        for lb in (0..self.cols).step_by(BLOCK) {
            let l_end = (lb + BLOCK).min(self.cols);
            for jb in (0..n).step_by(BLOCK) {
                let j_end = (jb + BLOCK).min(n);
                for i in 0..m {
                    let out_row = &mut out.data[i * n + jb..i * n + j_end];
                    for l in lb..l_end {
                        let a = self.data[i * self.cols + l];
                        if a == 0.0 {
                            continue;
                        }
                        let rhs_row = &rhs.data[l * n + jb..l * n + j_end];
                        axpy(a, rhs_row, out_row);
                    }
                }
            }
        }
        Ok(out)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Dot product with four independent accumulators.
#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    let mut acc = [0.0f64; 4];
    let xc = x.chunks_exact(4);
    let yc = y.chunks_exact(4);
    let (xr, yr) = (xc.remainder(), yc.remainder());
    for (a, b) in xc.zip(yc) {
        acc[0] += a[0] * b[0];
        acc[1] += a[1] * b[1];
        acc[2] += a[2] * b[2];
        acc[3] += a[3] * b[3];
    }
    let mut tail = 0.0;
    for (a, b) in xr.iter().zip(yr) {
        tail += a * b;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Writes `YᵀY` into `out` (k×k, row-major) for a row-major `rows×k` matrix
/// `y`. Only the upper triangle is accumulated; the lower one is mirrored,
/// so the result is exactly symmetric.
///
/// `cols_buf` is scratch space for the column-major copy of `y`.
pub(crate) fn gram_into(y: &Matrix, cols_buf: &mut Vec<f64>, out: &mut Vec<f64>) {
    let (n, k) = (y.rows, y.cols);
    cols_buf.clear();
    cols_buf.resize(n * k, 0.0);
    for t in 0..n {
        let row = y.row(t);
        for (l, &v) in row.iter().enumerate() {
            cols_buf[l * n + t] = v;
        }
    }
    out.clear();
    out.resize(k * k, 0.0);
    for a in 0..k {
        let ca = &cols_buf[a * n..(a + 1) * n];
        for b in a..k {
            let cb = &cols_buf[b * n..(b + 1) * n];
            let v = dot(ca, cb);
            out[a * k + b] = v;
            out[b * k + a] = v;
        }
    }
}

/// Computes `out = P * T` where `P` is k×k with `P[i][j] = 0` whenever
/// `j < i + offset`, and `T` is strictly upper triangular. The result has
/// zeros for `j < i + offset + 1`. Work is about k³/6 flops.
pub(crate) fn upper_shifted_mul(p: &[f64], offset: usize, t: &[f64], k: usize, out: &mut Vec<f64>) {
    out.clear();
    out.resize(k * k, 0.0);
    for lb in (0..k).step_by(BLOCK) {
        let l_end = (lb + BLOCK).min(k);
        for jb in (lb + 1..k).step_by(BLOCK) {
            let j_end = (jb + BLOCK).min(k);
            // P[i][l] != 0 needs l >= i + offset, so i <= l_end - 1 - offset.
            let i_end = match (l_end - 1).checked_sub(offset) {
                Some(v) => v + 1,
                None => continue,
            };
            for i in 0..i_end.min(k) {
                let l_start = lb.max(i + offset);
                let out_row = &mut out[i * k..(i + 1) * k];
                for l in l_start..l_end {
                    let a = p[i * k + l];
                    if a == 0.0 {
                        continue;
                    }
                    let j_lo = jb.max(l + 1);
                    if j_lo >= j_end {
                        continue;
                    }
                    axpy(
                        a,
                        &t[l * k + j_lo..l * k + j_end],
                        &mut out_row[j_lo..j_end],
                    );
                }
            }
        }
    }
}
