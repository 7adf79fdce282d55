//! Ranking metrics for alignment evaluation: optimistic ranks, Hits@k and
//! mean reciprocal rank.

use crate::align::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Rank of every ground-truth pair under a similarity matrix.
///
/// For a truth pair `(i, j)`, the rank is one plus the number of columns in
/// row `i` scoring strictly higher than `sim(i, j)`. Ties therefore resolve
/// optimistically: a score equal to the best one still ranks first. When the
/// matrix carries padding, only real target columns compete.
///
/// Every index must be in range; ranks come back in truth order, 1-based.
pub fn ranks<T: Scalar>(sim: &SimilarityMatrix<T>, truth: &[(usize, usize)]) -> Result<Vec<usize>> {
    let n_rows = sim.padded_from().map_or(sim.n_src(), |(r, _)| r);
    let n_cols = sim.padded_from().map_or(sim.n_tgt(), |(_, c)| c);
    let mut out = Vec::with_capacity(truth.len());
    for &(i, j) in truth {
        if i >= n_rows || j >= n_cols {
            return Err(Error::Index(format!(
                "truth pair ({i}, {j}) outside a {n_rows}x{n_cols} similarity matrix"
            )));
        }
        let target = sim.get(i, j);
        let mut above = 0usize;
        for c in 0..n_cols {
            if sim.get(i, c) > target {
                above += 1;
            }
        }
        out.push(above + 1);
    }
    Ok(out)
}

/// Fraction of ranks at or below `k`.
///
/// `hits_at_k(&[1, 2, 3, 10], 3)` is 0.75. `k` must be positive, and the
/// mean over zero ranks is undefined.
pub fn hits_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Parameter("hits_at_k: k must be positive".into()));
    }
    if ranks.is_empty() {
        return Err(Error::Undefined("hits_at_k over no ranks".into()));
    }
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    Ok(hits as f64 / ranks.len() as f64)
}

/// Mean reciprocal rank, `mean(1 / rank)`.
///
/// Ranks are 1-based; a zero rank is rejected, and the mean over zero ranks
/// is undefined.
pub fn mrr(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::Undefined("mrr over no ranks".into()));
    }
    let mut acc = 0.0;
    for &r in ranks {
        if r == 0 {
            return Err(Error::Parameter("mrr: ranks are 1-based".into()));
        }
        acc += 1.0 / r as f64;
    }
    Ok(acc / ranks.len() as f64)
}
