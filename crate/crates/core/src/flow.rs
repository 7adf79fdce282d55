//! Feature diffusion with fixed boundary values.
//!
//! A set of seed nodes keeps its features pinned while every other node
//! relaxes toward the weighted average of its neighbors. Two routes lead to
//! the same stationary point:
//!
//! * [`iterate_fp`] repeats the fixed-point update `X <- A_tilde * X`
//!   (resetting seed rows after each step), which is the unit-step explicit
//!   Euler discretization of the heat equation `dX/dt = -L X`;
//! * [`direct_solve`] solves the stationary linear system
//!   `L_oo x_o = -L_os x_s` exactly, component by component.
//!
//! With the self-loop-augmented normalization from
//! [`sym_normalize`](crate::sparse::sym_normalize), the spectral radius of
//! every principal submatrix of `A_tilde` is strictly below one, so the
//! iteration contracts and the stationary system is positive definite.

use crate::dense::FeatureMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::{spmm, SparseMatrix};

/// Component size up to which the stationary system is solved densely;
/// larger components use conjugate gradients.
const DENSE_SOLVE_MAX: usize = 4096;

/// Infinity-norm residual the direct solver guarantees.
const RESIDUAL_TOL: f64 = 1e-8;

/// Marks which nodes hold fixed boundary values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedMask {
    is_seed: Vec<bool>,
}

impl SeedMask {
    pub fn new(is_seed: Vec<bool>) -> Self {
        Self { is_seed }
    }

    /// Mask over `n` nodes with the listed nodes seeded.
    pub fn from_indices(n: usize, seeds: &[usize]) -> Result<Self> {
        let mut is_seed = vec![false; n];
        for &s in seeds {
            if s >= n {
                return Err(Error::Index(format!("seed {s} outside {n} nodes")));
            }
            is_seed[s] = true;
        }
        Ok(Self { is_seed })
    }

    pub fn len(&self) -> usize {
        self.is_seed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.is_seed.is_empty()
    }

    pub fn is_seed(&self, i: usize) -> bool {
        self.is_seed[i]
    }

    pub fn n_seeds(&self) -> usize {
        self.is_seed.iter().filter(|&&b| b).count()
    }

    pub fn seed_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.is_seed
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
    }
}

fn check_flow_shapes<T: Scalar>(
    a: &SparseMatrix<T>,
    x0: &FeatureMatrix<T>,
    mask: &SeedMask,
) -> Result<()> {
    if a.n_rows() != a.n_cols() {
        return Err(Error::Shape(format!(
            "flow operator is {}x{}, expected square",
            a.n_rows(),
            a.n_cols()
        )));
    }
    if x0.n_rows() != a.n_rows() || mask.len() != a.n_rows() {
        return Err(Error::Shape(format!(
            "operator has {} nodes, features {} rows, mask {} entries",
            a.n_rows(),
            x0.n_rows(),
            mask.len()
        )));
    }
    Ok(())
}

/// Runs `n_iters` fixed-point steps `X <- a_tilde * X`, copying the seed
/// rows of `x0` back after every step. Seed rows of the result are
/// bit-identical to `x0`.
pub fn iterate_fp<T: Scalar>(
    a_tilde: &SparseMatrix<T>,
    x0: &FeatureMatrix<T>,
    mask: &SeedMask,
    n_iters: usize,
) -> Result<FeatureMatrix<T>> {
    check_flow_shapes(a_tilde, x0, mask)?;
    let mut x = x0.clone();
    for _ in 0..n_iters {
        x = spmm(a_tilde, &x)?;
        for s in mask.seed_indices() {
            x.copy_row_from(s, x0, s);
        }
    }
    Ok(x)
}

/// Like [`iterate_fp`] but stops once the largest entry-wise change in a
/// step drops below `tol`. Returns the result and the number of steps taken.
pub fn iterate_to_convergence<T: Scalar>(
    a_tilde: &SparseMatrix<T>,
    x0: &FeatureMatrix<T>,
    mask: &SeedMask,
    max_iters: usize,
    tol: T,
) -> Result<(FeatureMatrix<T>, usize)> {
    check_flow_shapes(a_tilde, x0, mask)?;
    let mut x = x0.clone();
    for k in 0..max_iters {
        let mut next = spmm(a_tilde, &x)?;
        for s in mask.seed_indices() {
            next.copy_row_from(s, x0, s);
        }
        let change = next.max_abs_diff(&x)?;
        x = next;
        if change < tol {
            return Ok((x, k + 1));
        }
    }
    Ok((x, max_iters))
}

/// One explicit Euler step of the heat equation with step size `h`:
/// non-seed rows become `x - h * (laplacian * x)`, seed rows stay put.
/// `h` must lie in [0, 1]; `h = 0` is the identity and `h = 1` reproduces a
/// fixed-point step.
pub fn euler_step<T: Scalar>(
    laplacian: &SparseMatrix<T>,
    x: &FeatureMatrix<T>,
    mask: &SeedMask,
    h: T,
) -> Result<FeatureMatrix<T>> {
    check_flow_shapes(laplacian, x, mask)?;
    if h < T::zero() || h > T::one() {
        return Err(Error::Parameter(format!(
            "euler step size {h} outside [0, 1]"
        )));
    }
    let lx = spmm(laplacian, x)?;
    let mut out = x.clone();
    for r in 0..out.n_rows() {
        if !mask.is_seed(r) {
            let (dst, src) = (out.row_mut(r), lx.row(r));
            for (o, &v) in dst.iter_mut().zip(src) {
                *o -= h * v;
            }
        }
    }
    Ok(out)
}

/// Connected components of the symmetric off-diagonal pattern.
fn components<T: Scalar>(lap: &SparseMatrix<T>) -> Vec<Vec<usize>> {
    let n = lap.n_rows();
    let mut comp = vec![usize::MAX; n];
    let mut out: Vec<Vec<usize>> = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut nodes = vec![start];
        comp[start] = id;
        let mut queue = vec![start];
        while let Some(u) = queue.pop() {
            let (cols, _) = lap.row(u);
            for &v in cols {
                if v != u && comp[v] == usize::MAX {
                    comp[v] = id;
                    nodes.push(v);
                    queue.push(v);
                }
            }
        }
        nodes.sort_unstable();
        out.push(nodes);
    }
    out
}

/// Solves the stationary boundary problem exactly: seed rows keep their
/// `x0` values and every non-seed row solves `laplacian * x = 0` on its
/// connected component.
///
/// Components are handled independently; a component whose nodes are all
/// seeds is passed through, and a component with no seed at all has no
/// boundary data, which is reported as a singular-system error naming the
/// component. Small components use a dense Cholesky factorization, large
/// ones conjugate gradients; either way the final residual is checked
/// against an infinity-norm tolerance of 1e-8.
pub fn direct_solve<T: Scalar>(
    laplacian: &SparseMatrix<T>,
    x0: &FeatureMatrix<T>,
    mask: &SeedMask,
) -> Result<FeatureMatrix<T>> {
    direct_solve_with_cutoff(laplacian, x0, mask, DENSE_SOLVE_MAX)
}

/// [`direct_solve`] with an explicit dense-solver size cutoff. Exposed so
/// the iterative path can be exercised on small systems.
pub fn direct_solve_with_cutoff<T: Scalar>(
    laplacian: &SparseMatrix<T>,
    x0: &FeatureMatrix<T>,
    mask: &SeedMask,
    dense_cutoff: usize,
) -> Result<FeatureMatrix<T>> {
    check_flow_shapes(laplacian, x0, mask)?;
    let d = x0.n_cols();
    let mut x = x0.clone();

    for (comp_id, nodes) in components(laplacian).into_iter().enumerate() {
        let others: Vec<usize> = nodes.iter().copied().filter(|&i| !mask.is_seed(i)).collect();
        if others.is_empty() {
            continue;
        }
        if others.len() == nodes.len() {
            return Err(Error::SingularComponent {
                component: comp_id,
                size: nodes.len(),
                example: nodes[0],
            });
        }

        // local index of each non-seed node in this component
        let mut local = vec![usize::MAX; laplacian.n_rows()];
        for (k, &i) in others.iter().enumerate() {
            local[i] = k;
        }

        // rhs = -L_os * x_s, and L_oo in local indices
        let m = others.len();
        let mut rhs = FeatureMatrix::zeros(m, d);
        let mut oo_triplets: Vec<(usize, usize, T)> = Vec::new();
        for (k, &i) in others.iter().enumerate() {
            let (cols, vals) = laplacian.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if mask.is_seed(j) {
                    let dst = rhs.row_mut(k);
                    let src = x0.row(j);
                    for (o, &s) in dst.iter_mut().zip(src) {
                        *o -= v * s;
                    }
                } else if local[j] != usize::MAX {
                    oo_triplets.push((k, local[j], v));
                }
            }
        }
        let oo = SparseMatrix::from_triplets(m, m, oo_triplets)?;

        let solution = if m <= dense_cutoff {
            cholesky_solve(&oo, &rhs)?
        } else {
            cg_solve(&oo, &rhs)?
        };
        for (k, &i) in others.iter().enumerate() {
            x.copy_row_from(i, &solution, k);
        }
    }

    // Residual check over non-seed rows: rows of L*x must vanish there.
    let lx = spmm(laplacian, &x)?;
    let tol = T::from_f64_lossy(RESIDUAL_TOL);
    for r in 0..x.n_rows() {
        if !mask.is_seed(r) {
            for &v in lx.row(r) {
                if v.abs() > tol {
                    return Err(Error::Numeric {
                        stage: "direct_solve".into(),
                        msg: format!("residual {v} at row {r} exceeds {RESIDUAL_TOL}"),
                    });
                }
            }
        }
    }
    Ok(x)
}

/// Dense Cholesky solve of the symmetric positive definite system
/// `a * x = b`.
fn cholesky_solve<T: Scalar>(a: &SparseMatrix<T>, b: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    let n = a.n_rows();
    let mut l = a.to_dense();
    for j in 0..n {
        let mut diag = l.get(j, j);
        for k in 0..j {
            let v = l.get(j, k);
            diag -= v * v;
        }
        if diag <= T::zero() {
            return Err(Error::Numeric {
                stage: "direct_solve".into(),
                msg: format!("non-positive Cholesky pivot at {j}"),
            });
        }
        let diag = diag.sqrt();
        l.set(j, j, diag);
        for i in (j + 1)..n {
            let mut v = l.get(i, j);
            for k in 0..j {
                v -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, v / diag);
        }
    }

    let d = b.n_cols();
    let mut x = b.clone();
    // forward substitution L y = b
    for i in 0..n {
        for k in 0..i {
            let lik = l.get(i, k);
            for c in 0..d {
                let v = x.get(i, c) - lik * x.get(k, c);
                x.set(i, c, v);
            }
        }
        let lii = l.get(i, i);
        for c in 0..d {
            x.set(i, c, x.get(i, c) / lii);
        }
    }
    // back substitution L^T x = y
    for i in (0..n).rev() {
        for k in (i + 1)..n {
            let lki = l.get(k, i);
            for c in 0..d {
                let v = x.get(i, c) - lki * x.get(k, c);
                x.set(i, c, v);
            }
        }
        let lii = l.get(i, i);
        for c in 0..d {
            x.set(i, c, x.get(i, c) / lii);
        }
    }
    Ok(x)
}

/// Conjugate gradient solve of `a * x = b`, one column at a time.
fn cg_solve<T: Scalar>(a: &SparseMatrix<T>, b: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    let n = a.n_rows();
    let d = b.n_cols();
    let mut x = FeatureMatrix::zeros(n, d);
    let spmv = |v: &[T], out: &mut [T]| {
        for (r, o) in out.iter_mut().enumerate() {
            let (cols, vals) = a.row(r);
            let mut acc = T::zero();
            for (&c, &w) in cols.iter().zip(vals) {
                acc += w * v[c];
            }
            *o = acc;
        }
    };
    // push the 2-norm well below the guaranteed max-norm tolerance
    let tol = T::from_f64_lossy(RESIDUAL_TOL * 1e-3);
    let max_iters = 40 * n + 100;

    for col in 0..d {
        let bcol: Vec<T> = (0..n).map(|r| b.get(r, col)).collect();
        let bnorm = bcol.iter().map(|&v| v * v).sum::<T>().sqrt();
        if bnorm == T::zero() {
            continue;
        }
        let target = tol * T::max(T::one(), bnorm);
        let mut xc = vec![T::zero(); n];
        let mut r = bcol.clone();
        let mut p = r.clone();
        let mut ap = vec![T::zero(); n];
        let mut rs: T = r.iter().map(|&v| v * v).sum();
        let mut k = 0;
        while rs.sqrt() > target && k < max_iters {
            spmv(&p, &mut ap);
            let pap: T = p.iter().zip(&ap).map(|(&pv, &av)| pv * av).sum();
            if pap <= T::zero() {
                return Err(Error::Numeric {
                    stage: "direct_solve".into(),
                    msg: "conjugate gradient lost positive definiteness".into(),
                });
            }
            let alpha = rs / pap;
            for i in 0..n {
                xc[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rs_new: T = r.iter().map(|&v| v * v).sum();
            let beta = rs_new / rs;
            rs = rs_new;
            for i in 0..n {
                p[i] = r[i] + beta * p[i];
            }
            k += 1;
        }
        for (i, &v) in xc.iter().enumerate() {
            x.set(i, col, v);
        }
    }
    Ok(x)
}
