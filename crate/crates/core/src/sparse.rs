//! Compressed sparse row matrices and the three kernels the propagation
//! pipeline is built from: sparse-times-dense products, row normalization
//! and symmetric (degree) normalization.

use rayon::prelude::*;

use crate::dense::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row count below which `spmm` stays on one thread.
const PAR_ROW_THRESHOLD: usize = 512;

/// Sparse matrix in compressed sparse row form.
///
/// Invariants, established at construction and preserved by every operation:
/// `row_offsets` is non-decreasing with `row_offsets[0] == 0` and
/// `row_offsets[n_rows] == nnz`; within each row the column indices are
/// strictly increasing and below `n_cols`; no explicit zeros are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseMatrix<T> {
    /// Builds a matrix from (row, col, value) triplets.
    ///
    /// Triplets may arrive in any order; duplicates are summed. Entries that
    /// are exactly zero after merging are dropped.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, T)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, T)> = Vec::new();
        for (r, c, v) in triplets {
            if r >= n_rows || c >= n_cols {
                return Err(Error::Index(format!(
                    "triplet ({r}, {c}) outside a {n_rows}x{n_cols} matrix"
                )));
            }
            entries.push((r, c, v));
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(entries.len());
        let mut values: Vec<T> = Vec::with_capacity(entries.len());
        let mut i = 0;
        while i < entries.len() {
            let (r, c, mut v) = entries[i];
            i += 1;
            while i < entries.len() && entries[i].0 == r && entries[i].1 == c {
                v += entries[i].2;
                i += 1;
            }
            if v != T::zero() {
                row_offsets[r + 1] += 1;
                col_indices.push(c);
                values.push(v);
            }
        }
        for r in 0..n_rows {
            row_offsets[r + 1] += row_offsets[r];
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Matrix with no stored entries.
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_offsets: vec![0; n_rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// The n-by-n identity.
    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    /// Wraps pre-built CSR arrays without sorting or merging.
    ///
    /// The caller promises offsets are monotone and column indices are
    /// strictly increasing within each row. Explicit zeros are allowed,
    /// which lets many matrices share one sparsity structure.
    pub(crate) fn from_csr_unchecked(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<T>,
    ) -> Self {
        debug_assert_eq!(row_offsets.len(), n_rows + 1);
        debug_assert_eq!(col_indices.len(), values.len());
        debug_assert_eq!(row_offsets[n_rows], col_indices.len());
        debug_assert!(row_offsets.windows(2).all(|w| w[0] <= w[1]));
        debug_assert!((0..n_rows).all(|r| {
            let row = &col_indices[row_offsets[r]..row_offsets[r + 1]];
            row.windows(2).all(|w| w[0] < w[1]) && row.iter().all(|&c| c < n_cols)
        }));
        Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Column indices and values of row `r`.
    pub fn row(&self, r: usize) -> (&[usize], &[T]) {
        let lo = self.row_offsets[r];
        let hi = self.row_offsets[r + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// Iterates stored entries as (row, col, value) in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            let (cols, vals) = self.row(r);
            cols.iter().zip(vals).map(move |(&c, &v)| (r, c, v))
        })
    }

    /// Value at (r, c), zero when the entry is not stored.
    pub fn get(&self, r: usize, c: usize) -> T {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => T::zero(),
        }
    }

    /// Dense copy, for small matrices and diagnostics.
    pub fn to_dense(&self) -> FeatureMatrix<T> {
        let mut out = FeatureMatrix::zeros(self.n_rows, self.n_cols);
        for (r, c, v) in self.iter() {
            out.set(r, c, v);
        }
        out
    }

    /// True when (r, c) stored implies (c, r) stored with the same value.
    pub fn is_symmetric(&self) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        self.iter().all(|(r, c, v)| self.get(c, r) == v)
    }
}

/// Sparse-times-dense product `a * x`.
///
/// Rows of the output are computed independently, so the result does not
/// depend on the thread count.
pub fn spmm<T: Scalar>(a: &SparseMatrix<T>, x: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    if a.n_cols != x.n_rows() {
        return Err(Error::Shape(format!(
            "spmm: {}x{} times {}x{}",
            a.n_rows,
            a.n_cols,
            x.n_rows(),
            x.n_cols()
        )));
    }
    let d = x.n_cols();
    let mut out = FeatureMatrix::zeros(a.n_rows, d);
    if d == 0 || a.n_rows == 0 {
        return Ok(out);
    }

    let kernel = |r: usize, out_row: &mut [T]| {
        let (cols, vals) = a.row(r);
        for (&c, &v) in cols.iter().zip(vals) {
            let src = x.row(c);
            for (o, &s) in out_row.iter_mut().zip(src) {
                *o += v * s;
            }
        }
    };

    if a.n_rows >= PAR_ROW_THRESHOLD {
        out.data_mut()
            .par_chunks_mut(d)
            .enumerate()
            .for_each(|(r, row)| kernel(r, row));
    } else {
        for (r, row) in out.data_mut().chunks_mut(d).enumerate() {
            kernel(r, row);
        }
    }
    Ok(out)
}

/// Divides every row by its sum. Rows that sum to zero are left untouched.
///
/// Requires non-negative entries; a stored negative value is a domain error.
pub fn row_normalize<T: Scalar>(a: &SparseMatrix<T>) -> Result<SparseMatrix<T>> {
    if let Some((r, c, v)) = a.iter().find(|&(_, _, v)| v < T::zero()) {
        return Err(Error::Domain(format!(
            "row_normalize: negative entry {v} at ({r}, {c})"
        )));
    }
    let mut out = a.clone();
    for r in 0..out.n_rows {
        let lo = out.row_offsets[r];
        let hi = out.row_offsets[r + 1];
        let sum: T = out.values[lo..hi].iter().copied().sum();
        if sum > T::zero() {
            for v in &mut out.values[lo..hi] {
                *v /= sum;
            }
        }
    }
    Ok(out)
}

/// Symmetric degree normalization with self-loop-augmented degrees.
///
/// Returns `D̂^{-1/2} A D̂^{-1/2}` where `D̂ = D + I` and `D` holds the row
/// sums of `a`. The +1 keeps every scaling factor finite on isolated nodes
/// and bounds the spectrum of the companion Laplacian away from 2.
pub fn sym_normalize<T: Scalar>(a: &SparseMatrix<T>) -> Result<SparseMatrix<T>> {
    if a.n_rows != a.n_cols {
        return Err(Error::Shape(format!(
            "sym_normalize: matrix is {}x{}, expected square",
            a.n_rows, a.n_cols
        )));
    }
    let mut inv_sqrt = vec![T::zero(); a.n_rows];
    for (r, s) in inv_sqrt.iter_mut().enumerate() {
        let (_, vals) = a.row(r);
        let deg: T = vals.iter().copied().sum();
        *s = (deg + T::one()).sqrt().recip();
    }
    let mut out = a.clone();
    for r in 0..out.n_rows {
        let lo = out.row_offsets[r];
        let hi = out.row_offsets[r + 1];
        for k in lo..hi {
            let c = out.col_indices[k];
            out.values[k] = out.values[k] * inv_sqrt[r] * inv_sqrt[c];
        }
    }
    Ok(out)
}
