//! Turning feature matrices into entity alignments.
//!
//! The decoders here all start from a similarity matrix between source and
//! target entities. `greedy_match` reads off row-wise argmaxes, `csls`
//! penalizes hub targets before doing so, `sinkhorn` rescales the matrix
//! toward a doubly stochastic one so that mutually-best pairs stand out,
//! and `exact_assignment` solves the linear assignment problem outright
//! (cubic time, kept for small instances and as a reference point).

use crate::dense::{l2_normalize_rows, matmul_nt, FeatureMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense source-by-target similarity scores.
///
/// When a matrix has been padded square, the original shape travels along so
/// assignment extraction can tell real targets from padding.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix<T> {
    values: FeatureMatrix<T>,
    padded_from: Option<(usize, usize)>,
}

impl<T: Scalar> SimilarityMatrix<T> {
    /// Wraps a dense score matrix with no padding recorded.
    pub fn new(values: FeatureMatrix<T>) -> Self {
        Self {
            values,
            padded_from: None,
        }
    }

    pub fn n_src(&self) -> usize {
        self.values.n_rows()
    }

    pub fn n_tgt(&self) -> usize {
        self.values.n_cols()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values.get(i, j)
    }

    pub fn values(&self) -> &FeatureMatrix<T> {
        &self.values
    }

    /// Original (rows, cols) before padding, if this matrix was padded.
    pub fn padded_from(&self) -> Option<(usize, usize)> {
        self.padded_from
    }

    /// Rows that correspond to real sources (excludes padding rows).
    fn real_rows(&self) -> usize {
        self.padded_from.map_or(self.n_src(), |(r, _)| r)
    }

    /// Columns that correspond to real targets (excludes padding columns).
    fn real_cols(&self) -> usize {
        self.padded_from.map_or(self.n_tgt(), |(_, c)| c)
    }
}

/// One proposed target per source row; `None` when a source matched padding
/// or nothing at all.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    matches: Vec<Option<usize>>,
}

impl Assignment {
    pub fn matches(&self) -> &[Option<usize>] {
        &self.matches
    }

    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    /// True when no target is proposed for two different sources.
    pub fn is_one_to_one(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.matches
            .iter()
            .flatten()
            .all(|&t| seen.insert(t))
    }
}

/// Cosine similarity between the rows of two feature matrices. Zero rows
/// yield zero similarity everywhere.
pub fn cosine_sim<T: Scalar>(
    x_src: &FeatureMatrix<T>,
    x_tgt: &FeatureMatrix<T>,
) -> Result<SimilarityMatrix<T>> {
    if x_src.n_cols() != x_tgt.n_cols() {
        return Err(Error::Shape(format!(
            "cosine_sim: feature widths {} vs {}",
            x_src.n_cols(),
            x_tgt.n_cols()
        )));
    }
    let a = l2_normalize_rows(x_src);
    let b = l2_normalize_rows(x_tgt);
    Ok(SimilarityMatrix::new(matmul_nt(&a, &b)?))
}

/// Zero-pads a similarity matrix to a square one, recording the original
/// shape for later unpadding.
pub fn pad_square<T: Scalar>(sim: &SimilarityMatrix<T>) -> SimilarityMatrix<T> {
    let n = sim.n_src().max(sim.n_tgt());
    let mut values = FeatureMatrix::zeros(n, n);
    for r in 0..sim.n_src() {
        values.row_mut(r)[..sim.n_tgt()].copy_from_slice(sim.values.row(r));
    }
    SimilarityMatrix {
        values,
        padded_from: Some((sim.real_rows(), sim.real_cols())),
    }
}

/// Sinkhorn rescaling toward a doubly stochastic matrix.
///
/// Starts from `exp((s - max(s)) / tau)`; the shift by the global maximum
/// prevents overflow and, because each normalization pass divides it away,
/// does not change any normalized iterate. Each of the `iters` rounds
/// divides rows by their sums and then columns by theirs, so after at least
/// one round the columns sum to one. With `iters = 0` the raw (shifted)
/// exponential comes back.
pub fn sinkhorn<T: Scalar>(
    sim: &SimilarityMatrix<T>,
    tau: T,
    iters: usize,
) -> Result<SimilarityMatrix<T>> {
    if tau <= T::zero() || !tau.is_finite() {
        return Err(Error::Parameter(format!(
            "sinkhorn temperature {tau} must be positive and finite"
        )));
    }
    let (n, m) = (sim.n_src(), sim.n_tgt());
    let mut s = FeatureMatrix::zeros(n, m);
    let max = sim
        .values
        .data()
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    for r in 0..n {
        let src = sim.values.row(r);
        let dst = s.row_mut(r);
        for (o, &v) in dst.iter_mut().zip(src) {
            *o = ((v - max) / tau).exp();
        }
    }

    for _ in 0..iters {
        for r in 0..n {
            let row = s.row_mut(r);
            let sum: T = row.iter().copied().sum();
            if sum > T::zero() {
                for v in row {
                    *v /= sum;
                }
            }
        }
        let mut col_sums = vec![T::zero(); m];
        for r in 0..n {
            for (c, &v) in s.row(r).iter().enumerate() {
                col_sums[c] += v;
            }
        }
        for r in 0..n {
            for (c, v) in s.row_mut(r).iter_mut().enumerate() {
                if col_sums[c] > T::zero() {
                    *v /= col_sums[c];
                }
            }
        }
    }

    if s.first_non_finite().is_some() {
        return Err(Error::Numeric {
            stage: "sinkhorn".into(),
            msg: "normalization produced a non-finite value".into(),
        });
    }
    Ok(SimilarityMatrix {
        values: s,
        padded_from: sim.padded_from,
    })
}

/// Row-wise argmax decoding. Ties break toward the lowest column index;
/// matches landing in padding columns are reported as `None`. Nothing stops
/// two sources from picking the same target.
pub fn greedy_match<T: Scalar>(sim: &SimilarityMatrix<T>) -> Assignment {
    let real_cols = sim.real_cols();
    let mut matches = Vec::with_capacity(sim.real_rows());
    for r in 0..sim.real_rows() {
        let row = sim.values.row(r);
        let mut best: Option<usize> = None;
        let mut best_v = T::neg_infinity();
        for (c, &v) in row.iter().enumerate() {
            if v > best_v {
                best_v = v;
                best = Some(c);
            }
        }
        matches.push(best.filter(|&c| c < real_cols));
    }
    Assignment { matches }
}

/// Cross-domain similarity local scaling: rescales every score by the mean
/// of its row's and column's top-k scores,
/// `2 * s(i, j) - mean_topk(row i) - mean_topk(col j)`.
pub fn csls<T: Scalar>(sim: &SimilarityMatrix<T>, k: usize) -> Result<SimilarityMatrix<T>> {
    let (n, m) = (sim.n_src(), sim.n_tgt());
    if k == 0 || k > n || k > m {
        return Err(Error::Parameter(format!(
            "csls neighborhood {k} outside [1, min({n}, {m})]"
        )));
    }
    let top_k_mean = |vals: &mut Vec<T>| -> T {
        vals.sort_unstable_by(|a, b| b.partial_cmp(a).expect("similarities are finite"));
        vals[..k].iter().copied().sum::<T>() / T::from_f64_lossy(k as f64)
    };
    let mut r_tgt = Vec::with_capacity(n);
    for i in 0..n {
        let mut row = sim.values.row(i).to_vec();
        r_tgt.push(top_k_mean(&mut row));
    }
    let mut r_src = Vec::with_capacity(m);
    for j in 0..m {
        let mut col: Vec<T> = (0..n).map(|i| sim.values.get(i, j)).collect();
        r_src.push(top_k_mean(&mut col));
    }
    let two = T::one() + T::one();
    let values = FeatureMatrix::from_fn(n, m, |i, j| two * sim.values.get(i, j) - r_tgt[i] - r_src[j]);
    Ok(SimilarityMatrix {
        values,
        padded_from: sim.padded_from,
    })
}

/// Exact maximum-weight assignment on a square similarity matrix, by the
/// Hungarian algorithm with potentials (O(n^3)). Practical up to roughly
/// n = 512; beyond that, Sinkhorn decoding is the intended route.
pub fn exact_assignment<T: Scalar>(sim: &SimilarityMatrix<T>) -> Result<Assignment> {
    let n = sim.n_src();
    if n != sim.n_tgt() {
        return Err(Error::Shape(format!(
            "exact_assignment: matrix is {}x{}, pad it square first",
            n,
            sim.n_tgt()
        )));
    }
    if n == 0 {
        return Ok(Assignment { matches: vec![] });
    }

    // Minimize cost = -similarity. Arrays are 1-indexed; p[j] is the row
    // currently assigned to column j, column 0 is the virtual start.
    let cost = |i: usize, j: usize| -sim.values.get(i - 1, j - 1);
    let mut u = vec![T::zero(); n + 1];
    let mut v = vec![T::zero(); n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![T::infinity(); n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = T::infinity();
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let real_rows = sim.real_rows();
    let real_cols = sim.real_cols();
    let mut matches = vec![None; real_rows];
    for (j, &i) in p.iter().enumerate().take(n + 1).skip(1) {
        if i >= 1 && i - 1 < real_rows && j - 1 < real_cols {
            matches[i - 1] = Some(j - 1);
        }
    }
    Ok(Assignment { matches })
}
