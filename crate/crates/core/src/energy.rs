//! Smoothness diagnostics: Dirichlet energy of features on a graph and the
//! in-neighbor homophily of a labeling.

use crate::dense::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::SparseMatrix;

/// Dirichlet energy of `x` on the weighted undirected graph `a`, with
/// degree-scaled node features:
///
/// ```text
/// E(x) = 1/2 * sum_ij a_ij || x_i / sqrt(D_ii + 1) - x_j / sqrt(D_jj + 1) ||^2
/// ```
///
/// The +1 in the scaling matches the self-loop-augmented normalization used
/// everywhere else in this crate, so this sum equals the quadratic form of
/// the corresponding augmented Laplacian. `a` must be square, symmetric and
/// non-negative.
pub fn dirichlet_energy<T: Scalar>(a: &SparseMatrix<T>, x: &FeatureMatrix<T>) -> Result<T> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::Shape(format!(
            "dirichlet_energy: adjacency is {}x{}, expected square",
            a.n_rows(),
            a.n_cols()
        )));
    }
    if a.n_rows() != x.n_rows() {
        return Err(Error::Shape(format!(
            "dirichlet_energy: {} nodes but {} feature rows",
            a.n_rows(),
            x.n_rows()
        )));
    }
    if let Some((r, c, v)) = a.iter().find(|&(_, _, v)| v < T::zero()) {
        return Err(Error::Domain(format!(
            "dirichlet_energy: negative weight {v} at ({r}, {c})"
        )));
    }
    if !a.is_symmetric() {
        return Err(Error::Domain(
            "dirichlet_energy: adjacency is not symmetric".into(),
        ));
    }

    let inv_sqrt: Vec<T> = (0..a.n_rows())
        .map(|r| {
            let (_, vals) = a.row(r);
            let deg: T = vals.iter().copied().sum();
            (deg + T::one()).sqrt().recip()
        })
        .collect();

    let mut acc = T::zero();
    for (i, j, w) in a.iter() {
        let si = inv_sqrt[i];
        let sj = inv_sqrt[j];
        let mut sq = T::zero();
        for (&xi, &xj) in x.row(i).iter().zip(x.row(j)) {
            let d = xi * si - xj * sj;
            sq += d * d;
        }
        acc += w * sq;
    }
    Ok(acc / (T::one() + T::one()))
}

/// In-neighbor homophily of a node labeling on a directed graph.
///
/// For every node with at least one in-neighbor, take the fraction of its
/// in-neighbors sharing its label; return the mean over those nodes. Entry
/// (i, j) of `a` is read as an edge i -> j, and any non-zero weight counts
/// as an edge. A graph with no edges has no in-neighbors anywhere and the
/// mean is undefined.
pub fn homophily<T: Scalar>(a: &SparseMatrix<T>, labels: &[usize]) -> Result<f64> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::Shape(format!(
            "homophily: adjacency is {}x{}, expected square",
            a.n_rows(),
            a.n_cols()
        )));
    }
    if labels.len() != a.n_rows() {
        return Err(Error::Shape(format!(
            "homophily: {} labels for {} nodes",
            labels.len(),
            a.n_rows()
        )));
    }
    let mut same = vec![0usize; a.n_rows()];
    let mut total = vec![0usize; a.n_rows()];
    for (src, dst, _) in a.iter() {
        total[dst] += 1;
        if labels[src] == labels[dst] {
            same[dst] += 1;
        }
    }
    let mut sum = 0.0;
    let mut counted = 0usize;
    for i in 0..a.n_rows() {
        if total[i] > 0 {
            sum += same[i] as f64 / total[i] as f64;
            counted += 1;
        }
    }
    if counted == 0 {
        return Err(Error::Undefined(
            "homophily: no node has an in-neighbor".into(),
        ));
    }
    Ok(sum / counted as f64)
}
