//! Dense row-major feature matrices.
//!
//! This is the representation every propagation stage reads and writes.
//! Entries are expected to stay finite; the decode pipeline checks that
//! explicitly after each stage rather than after every arithmetic op.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row count below which dense products stay on one thread.
const PAR_ROW_THRESHOLD: usize = 256;

/// Dense matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![T::zero(); n_rows * n_cols],
        }
    }

    /// Wraps an existing row-major buffer.
    pub fn from_vec(n_rows: usize, n_cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::Shape(format!(
                "buffer of {} values cannot be {}x{}",
                data.len(),
                n_rows,
                n_cols
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n_rows * n_cols);
        for r in 0..n_rows {
            for c in 0..n_cols {
                data.push(f(r, c));
            }
        }
        Self {
            n_rows,
            n_cols,
            data,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.n_cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.n_cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        (0..self.n_rows).map(move |r| self.row(r))
    }

    /// Copies row `src_row` of `src` into row `dst_row` of `self`.
    pub fn copy_row_from(&mut self, dst_row: usize, src: &Self, src_row: usize) {
        debug_assert_eq!(self.n_cols, src.n_cols);
        self.row_mut(dst_row).copy_from_slice(src.row(src_row));
    }

    /// New matrix holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols);
        for &r in rows {
            if r >= self.n_rows {
                return Err(Error::Index(format!(
                    "row {r} outside a matrix with {} rows",
                    self.n_rows
                )));
            }
            data.extend_from_slice(self.row(r));
        }
        Self::from_vec(rows.len(), self.n_cols, data)
    }

    /// Position of the first non-finite entry, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize)> {
        self.data
            .iter()
            .position(|v| !v.is_finite())
            .map(|k| (k / self.n_cols.max(1), k % self.n_cols.max(1)))
    }

    /// Largest absolute entry-wise difference. Shapes must match.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::Shape(format!(
                "comparing {}x{} with {}x{}",
                self.n_rows, self.n_cols, other.n_rows, other.n_cols
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), T::max))
    }
}

/// Horizontal concatenation. All inputs must share a row count; a single
/// input comes back unchanged.
pub fn concat_columns<T: Scalar>(mats: &[&FeatureMatrix<T>]) -> Result<FeatureMatrix<T>> {
    let first = mats
        .first()
        .ok_or_else(|| Error::Parameter("concat_columns: no inputs".into()))?;
    let n_rows = first.n_rows;
    let n_cols: usize = mats.iter().map(|m| m.n_cols).sum();
    for m in mats {
        if m.n_rows != n_rows {
            return Err(Error::Shape(format!(
                "concat_columns: {} rows next to {} rows",
                m.n_rows, n_rows
            )));
        }
    }
    let mut data = Vec::with_capacity(n_rows * n_cols);
    for r in 0..n_rows {
        for m in mats {
            data.extend_from_slice(m.row(r));
        }
    }
    FeatureMatrix::from_vec(n_rows, n_cols, data)
}

/// Scales every row to unit Euclidean norm. Zero rows are left as they are,
/// so output row norms are exactly 0 or 1 (up to rounding).
pub fn l2_normalize_rows<T: Scalar>(x: &FeatureMatrix<T>) -> FeatureMatrix<T> {
    let mut out = x.clone();
    for r in 0..out.n_rows {
        let row = out.row_mut(r);
        let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
        if norm > T::zero() {
            for v in row {
                *v /= norm;
            }
        }
    }
    out
}

/// Dense product `a * b`.
pub fn matmul<T: Scalar>(a: &FeatureMatrix<T>, b: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    if a.n_cols != b.n_rows {
        return Err(Error::Shape(format!(
            "matmul: {}x{} times {}x{}",
            a.n_rows, a.n_cols, b.n_rows, b.n_cols
        )));
    }
    let (n, m) = (a.n_rows, b.n_cols);
    let mut out = FeatureMatrix::zeros(n, m);
    if m == 0 || n == 0 {
        return Ok(out);
    }
    let kernel = |r: usize, out_row: &mut [T]| {
        let a_row = a.row(r);
        for (kk, &av) in a_row.iter().enumerate() {
            if av != T::zero() {
                let b_row = b.row(kk);
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        }
    };
    if n >= PAR_ROW_THRESHOLD {
        out.data
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(r, row)| kernel(r, row));
    } else {
        for (r, row) in out.data.chunks_mut(m).enumerate() {
            kernel(r, row);
        }
    }
    Ok(out)
}

/// Dense product against a transpose, `a * b^T`. Both inputs are row-major,
/// so this is the cache-friendly way to form similarity matrices.
pub fn matmul_nt<T: Scalar>(
    a: &FeatureMatrix<T>,
    b: &FeatureMatrix<T>,
) -> Result<FeatureMatrix<T>> {
    if a.n_cols != b.n_cols {
        return Err(Error::Shape(format!(
            "matmul_nt: {}x{} times transpose of {}x{}",
            a.n_rows, a.n_cols, b.n_rows, b.n_cols
        )));
    }
    let (n, m) = (a.n_rows, b.n_rows);
    let mut out = FeatureMatrix::zeros(n, m);
    if n == 0 || m == 0 {
        return Ok(out);
    }
    let kernel = |r: usize, out_row: &mut [T]| {
        let a_row = a.row(r);
        for (j, o) in out_row.iter_mut().enumerate() {
            let b_row = b.row(j);
            let mut acc = T::zero();
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            *o = acc;
        }
    };
    if n >= PAR_ROW_THRESHOLD {
        out.data
            .par_chunks_mut(m)
            .enumerate()
            .for_each(|(r, row)| kernel(r, row));
    } else {
        for (r, row) in out.data.chunks_mut(m).enumerate() {
            kernel(r, row);
        }
    }
    Ok(out)
}
