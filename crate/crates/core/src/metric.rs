//! Laplacian algebra and quasi-Euclidean graph distances.
//!
//! The distance between nodes i and j under edge weights W is
//! `d_ij = || L^+ (e_i - e_j) ||_2` where `L = diag(W 1) - W` and `L^+` is
//! the Moore-Penrose pseudoinverse. Squared distances for all pairs at once
//! come from the delta transform of `{L^+}^2`:
//! `Delta(A) = 1 d_A^T + d_A 1^T - 2 A` with `d_A` the diagonal of A.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::graph::{EdgeWeights, Graph};
use crate::linalg;

/// Weighted graph Laplacian `diag(W 1) - W`. Symmetric, rows sum to zero,
/// positive semidefinite with rank p-1 on a connected graph.
pub fn laplacian(g: &Graph, w: &EdgeWeights) -> Result<Array2<f64>> {
    g.check_weights(w)?;
    let p = g.p();
    let mut l = Array2::zeros((p, p));
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let we = w.values()[e];
        l[[i, j]] -= we;
        l[[j, i]] -= we;
        l[[i, i]] += we;
        l[[j, j]] += we;
    }
    Ok(l)
}

/// Moore-Penrose pseudoinverse of a connected-graph Laplacian, by symmetric
/// eigendecomposition. Eigenvalues above the relative threshold
/// `p * eps * lambda_max` are inverted; exactly one eigenvalue must fall
/// below it. More than one signals a disconnected graph, zero signals an
/// input that is not a singular Laplacian at all.
pub fn laplacian_pseudoinverse(l: &Array2<f64>) -> Result<Array2<f64>> {
    let p = l.nrows();
    if l.ncols() != p {
        return Err(Error::dim("laplacian", p, l.ncols()));
    }
    let (vals, vecs) = linalg::eigh(l)?;
    let lmax = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if lmax == 0.0 {
        return Err(Error::Numerical("laplacian is identically zero".into()));
    }
    let thresh = p as f64 * f64::EPSILON * lmax;
    let null_count = vals.iter().filter(|v| v.abs() < thresh).count();
    if null_count > 1 {
        return Err(Error::Numerical(format!(
            "laplacian has {null_count} null eigenvalues (disconnected graph?)"
        )));
    }
    if null_count == 0 {
        return Err(Error::Numerical(
            "laplacian has no null eigenvalue; input is not a graph Laplacian".into(),
        ));
    }
    let inv: Array1<f64> = vals.mapv(|v| if v.abs() < thresh { 0.0 } else { 1.0 / v });
    // V diag(inv) V^T
    let mut scaled = vecs.clone();
    for (mut col, iv) in scaled.columns_mut().into_iter().zip(inv.iter()) {
        col *= *iv;
    }
    let mut lp = scaled.dot(&vecs.t());
    linalg::symmetrize(&mut lp);
    Ok(lp)
}

/// `Delta(A) = 1 d_A^T + d_A 1^T - 2 A`, mapping a Gram-like matrix to
/// squared pairwise distances. Annihilates exactly the span of
/// `{ 1 c^T + c 1^T }`.
pub fn delta_transform(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let p = a.nrows();
    if a.ncols() != p {
        return Err(Error::dim("delta transform input", p, a.ncols()));
    }
    let d = a.diag();
    let mut out = Array2::zeros((p, p));
    for i in 0..p {
        for j in 0..p {
            out[[i, j]] = d[i] + d[j] - 2.0 * a[[i, j]];
        }
    }
    Ok(out)
}

/// All-pairs quasi-Euclidean distances `d_ij = || L^+ (e_i - e_j) ||`,
/// computed as the elementwise square root of `Delta({L^+}^2)`.
pub fn quasi_euclidean_distances(g: &Graph, w: &EdgeWeights) -> Result<Array2<f64>> {
    Ok(GraphMetric::compute(g, w)?.dist)
}

/// Cached metric structure for one (graph, weights) pair: the pseudoinverse,
/// its square, and the distance matrix. Inference rebuilds this at every
/// parameter value, so the pieces are kept together.
#[derive(Debug, Clone)]
pub struct GraphMetric {
    /// `L^+`
    pub lplus: Array2<f64>,
    /// `{L^+}^2`
    pub lplus_sq: Array2<f64>,
    /// Distances, symmetric with zero diagonal.
    pub dist: Array2<f64>,
}

impl GraphMetric {
    pub fn compute(g: &Graph, w: &EdgeWeights) -> Result<GraphMetric> {
        let l = laplacian(g, w)?;
        let lplus = laplacian_pseudoinverse(&l)?;
        let mut lplus_sq = lplus.dot(&lplus);
        linalg::symmetrize(&mut lplus_sq);
        let d2 = delta_transform(&lplus_sq.view())?;
        let p = g.p();
        let mut dist = d2.mapv(|v| v.max(0.0).sqrt());
        for i in 0..p {
            dist[[i, i]] = 0.0;
        }
        Ok(GraphMetric {
            lplus,
            lplus_sq,
            dist,
        })
    }
}
