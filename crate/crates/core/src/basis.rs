//! Line-graph Laplacian eigenbases over edges and the coefficient-to-weight
//! map.
//!
//! Edge weights are modeled as `w = exp(X^E psi + V^k eta)` where the
//! columns of `V^k` are eigenvectors of the line-graph Laplacian associated
//! with its k smallest eigenvalues. Low eigenvalues mean slowly varying
//! eigenvectors, so the weight field is smooth over the graph. When edge
//! covariates are present the basis can be orthogonalized against them so
//! the two parts of the parameterization do not compete for the same
//! directions.

use ndarray::{s, Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::graph::{EdgeWeights, Graph};
use crate::linalg;
use crate::metric::laplacian;

/// Eigenvector basis over the edges of a graph.
#[derive(Debug, Clone)]
pub struct EdgeBasis {
    v: Array2<f64>,
    eigenvalues: Vec<f64>,
    orthogonalized: bool,
}

impl EdgeBasis {
    pub fn k(&self) -> usize {
        self.v.ncols()
    }

    /// Number of edges the basis is defined over.
    pub fn q(&self) -> usize {
        self.v.nrows()
    }

    /// q x k matrix of basis vectors, columns ordered by ascending
    /// eigenvalue.
    pub fn vectors(&self) -> &Array2<f64> {
        &self.v
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn orthogonalized(&self) -> bool {
        self.orthogonalized
    }

    /// Reassemble a basis from previously exported parts, revalidating
    /// shapes.
    pub fn from_parts(v: Array2<f64>, eigenvalues: Vec<f64>, orthogonalized: bool) -> Result<Self> {
        if v.ncols() != eigenvalues.len() {
            return Err(Error::dim("basis eigenvalues", v.ncols(), eigenvalues.len()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidValue("basis contains non-finite entries".into()));
        }
        Ok(EdgeBasis {
            v,
            eigenvalues,
            orthogonalized,
        })
    }
}

/// Eigenvectors of the line-graph Laplacian for the k smallest eigenvalues.
///
/// Determinism conventions: within a block of tied eigenvalues (relative gap
/// below 1e-9) columns are ordered by the index of their largest-magnitude
/// entry, and each column is flipped so its first entry exceeding
/// `1e-8 * max|entry|` is positive.
pub fn lgl_eigenbasis(g: &Graph, k: usize) -> Result<EdgeBasis> {
    let lg = g.line_graph();
    let q = lg.p();
    if k == 0 || k > q {
        return Err(Error::InvalidValue(format!(
            "basis size k must be in 1..={q}, got {k}"
        )));
    }
    let ll = laplacian(&lg, &EdgeWeights::uniform(lg.q(), 1.0)?)?;
    let (vals, vecs) = linalg::eigh(&ll)?;
    let (v, eigenvalues) = select_smallest(&vals, &vecs, k);
    Ok(EdgeBasis {
        v,
        eigenvalues,
        orthogonalized: false,
    })
}

/// Edge-level covariate matrix X^E with column names.
#[derive(Debug, Clone)]
pub struct EdgeCovariates {
    x: Array2<f64>,
    names: Vec<String>,
    rank_deficient: bool,
}

impl EdgeCovariates {
    pub fn new(x: Array2<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != x.ncols() {
            return Err(Error::dim("covariate names", x.ncols(), names.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("covariates contain non-finite entries".into()));
        }
        let rank_deficient = is_rank_deficient(&x);
        Ok(EdgeCovariates {
            x,
            names,
            rank_deficient,
        })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn r(&self) -> usize {
        self.x.ncols()
    }

    /// True when the columns were detected as linearly dependent at
    /// construction. Kept as metadata rather than an error so callers can
    /// decide; the orthogonalized basis refuses to work with such a matrix.
    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovariateMode {
    /// Edge value is the mean of the endpoint features.
    Average,
    /// Edge value is the absolute difference of the endpoint features.
    Difference,
}

/// Lift node features to edge covariates by averaging or differencing the
/// endpoints of every edge.
pub fn edge_covariates_from_nodes(
    g: &Graph,
    x: &ArrayView2<f64>,
    mode: CovariateMode,
) -> Result<EdgeCovariates> {
    if x.nrows() != g.p() {
        return Err(Error::dim("node feature rows", g.p(), x.nrows()));
    }
    let q = g.q();
    let r = x.ncols();
    let mut xe = Array2::zeros((q, r));
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        for c in 0..r {
            xe[[e, c]] = match mode {
                CovariateMode::Average => 0.5 * (x[[i, c]] + x[[j, c]]),
                CovariateMode::Difference => (x[[i, c]] - x[[j, c]]).abs(),
            };
        }
    }
    let names = (0..r).map(|c| format!("x{c}")).collect();
    EdgeCovariates::new(xe, names)
}

/// Eigenbasis of the projected operator `P L^L P` where P projects onto the
/// orthogonal complement of the covariate column space, so every basis
/// vector is orthogonal to X^E.
///
/// The covariate directions themselves are null vectors of the projected
/// operator; to keep them out of the smallest-k selection they are shifted
/// to the top of the spectrum by adding `c (I - P)` with c above the largest
/// Laplacian eigenvalue. The smallest q - r eigenpairs of the shifted
/// operator are then exactly the complement basis, ordered as usual.
pub fn orthogonalized_basis(g: &Graph, xe: &EdgeCovariates, k: usize) -> Result<EdgeBasis> {
    let lg = g.line_graph();
    let q = lg.p();
    if xe.matrix().nrows() != q {
        return Err(Error::dim("covariate rows", q, xe.matrix().nrows()));
    }
    let r = xe.r();
    if r == 0 {
        return lgl_eigenbasis(g, k);
    }
    if xe.rank_deficient() {
        return Err(Error::InvalidValue(
            "covariate matrix is rank deficient; drop redundant columns before orthogonalizing"
                .into(),
        ));
    }
    if k == 0 || k > q - r {
        return Err(Error::InvalidValue(format!(
            "basis size k must be in 1..={} after removing {r} covariate directions, got {k}",
            q - r
        )));
    }

    let x = xe.matrix();
    let xtx = x.t().dot(x);
    let xtx_chol = linalg::Chol::new(&xtx)
        .map_err(|_| Error::Numerical("covariate Gram matrix X^T X is singular".into()))?;
    // P = I - X (X^T X)^-1 X^T
    let coef = xtx_chol.solve_mat(&x.t().to_owned())?;
    let mut proj = Array2::eye(q);
    proj -= &x.dot(&coef);
    linalg::symmetrize(&mut proj);

    let ll = laplacian(&lg, &EdgeWeights::uniform(lg.q(), 1.0)?)?;
    let mut m = proj.dot(&ll).dot(&proj);
    linalg::symmetrize(&mut m);
    // shift covariate-space directions above the Laplacian spectrum
    let lmax_bound = 2.0 * ll.diag().iter().fold(0.0f64, |a, &b| a.max(b)) + 1.0;
    let shift = {
        let mut s = Array2::eye(q);
        s -= &proj;
        s * lmax_bound
    };
    m += &shift;

    let (vals, vecs) = linalg::eigh(&m)?;
    let (mut v, eigenvalues) = select_smallest(&vals, &vecs, k);
    // clean residual leakage into the covariate space, then renormalize
    v = proj.dot(&v);
    for mut col in v.columns_mut() {
        let norm = col.dot(&col).sqrt();
        if norm > 0.0 {
            col /= norm;
        }
    }
    Ok(EdgeBasis {
        v,
        eigenvalues,
        orthogonalized: true,
    })
}

/// Coefficients mapping a basis (and optional covariates) to positive edge
/// weights.
#[derive(Debug, Clone)]
pub struct WeightModel {
    pub basis: EdgeBasis,
    pub eta: Array1<f64>,
    pub covariates: Option<(EdgeCovariates, Array1<f64>)>,
    /// Force eta_1 = 0, removing it from the free parameters; recommended
    /// for CAR models where the intercept is confounded with sigma^2.
    pub intercept_fixed: bool,
}

impl WeightModel {
    pub fn new(
        basis: EdgeBasis,
        eta: Array1<f64>,
        covariates: Option<(EdgeCovariates, Array1<f64>)>,
        intercept_fixed: bool,
    ) -> Result<Self> {
        if eta.len() != basis.k() {
            return Err(Error::dim("eta", basis.k(), eta.len()));
        }
        if intercept_fixed && eta[0] != 0.0 {
            return Err(Error::InvalidValue(
                "intercept_fixed requires eta[0] = 0".into(),
            ));
        }
        if let Some((xe, psi)) = &covariates {
            if psi.len() != xe.r() {
                return Err(Error::dim("psi", xe.r(), psi.len()));
            }
            if xe.matrix().nrows() != basis.q() {
                return Err(Error::dim("covariate rows", basis.q(), xe.matrix().nrows()));
            }
        }
        Ok(WeightModel {
            basis,
            eta,
            covariates,
            intercept_fixed,
        })
    }

    pub fn weights(&self) -> Result<EdgeWeights> {
        weights_from_coefficients(self)
    }
}

/// `w = exp(X^E psi + V^k eta)`; strictly positive by construction.
pub fn weights_from_coefficients(m: &WeightModel) -> Result<EdgeWeights> {
    if m.eta.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("eta contains non-finite entries".into()));
    }
    let mut log_w = m.basis.vectors().dot(&m.eta);
    if let Some((xe, psi)) = &m.covariates {
        if psi.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("psi contains non-finite entries".into()));
        }
        log_w += &xe.matrix().dot(psi);
    }
    EdgeWeights::new(log_w.mapv(f64::exp))
}

/// Indicator vectors splitting the edges of a lattice into within-row and
/// within-column edges; together they partition the constant vector, so they
/// can replace the intercept basis function with separate row and column
/// intercepts.
pub fn split_intercept_row_col(g: &Graph) -> Result<(Array1<f64>, Array1<f64>)> {
    let coords = match (g.lattice_dims(), g.coords()) {
        (Some(_), Some(c)) => c,
        _ => {
            return Err(Error::InvalidValue(
                "row/column intercept split requires a lattice graph".into(),
            ))
        }
    };
    let q = g.q();
    let mut row = Array1::zeros(q);
    let mut col = Array1::zeros(q);
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        if coords[i].0 == coords[j].0 {
            row[e] = 1.0;
        } else {
            col[e] = 1.0;
        }
    }
    Ok((row, col))
}

/// Default basis size `round(sqrt(n p))`, clamped to `[2, q]`.
pub fn default_basis_size(n: usize, p: usize, q: usize) -> usize {
    let k = ((n * p) as f64).sqrt().round() as usize;
    k.clamp(2, q)
}

/// Select the k smallest eigenpairs with deterministic tie and sign
/// conventions applied.
fn select_smallest(vals: &Array1<f64>, vecs: &Array2<f64>, k: usize) -> (Array2<f64>, Vec<f64>) {
    let q = vals.len();
    // block id per eigenvalue: consecutive values tied when the gap is
    // below 1e-9 relative to the local scale
    let mut block = vec![0usize; q];
    for i in 1..q {
        let gap = (vals[i] - vals[i - 1]).abs();
        let scale = vals[i].abs().max(vals[i - 1].abs()).max(1.0);
        block[i] = if gap < 1e-9 * scale {
            block[i - 1]
        } else {
            block[i - 1] + 1
        };
    }
    let argmax = |c: usize| -> usize {
        let col = vecs.column(c);
        let mut best = 0usize;
        let mut best_v = -1.0f64;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_v {
                best_v = v.abs();
                best = i;
            }
        }
        best
    };
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by_key(|&c| (block[c], argmax(c), c));

    let mut v = Array2::zeros((vecs.nrows(), k));
    let mut eigenvalues = Vec::with_capacity(k);
    for (out_c, &c) in order.iter().take(k).enumerate() {
        v.slice_mut(s![.., out_c]).assign(&vecs.column(c));
        eigenvalues.push(vals[c]);
    }
    apply_sign_convention(&mut v);
    (v, eigenvalues)
}

/// Flip each column so its first entry above `1e-8 * max|entry|` is
/// positive.
fn apply_sign_convention(v: &mut Array2<f64>) {
    for mut col in v.columns_mut() {
        let maxabs = col.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
        if maxabs == 0.0 {
            continue;
        }
        let lead = col.iter().find(|x| x.abs() > 1e-8 * maxabs);
        if let Some(&lead) = lead {
            if lead < 0.0 {
                col.map_inplace(|x| *x = -*x);
            }
        }
    }
}

fn is_rank_deficient(x: &Array2<f64>) -> bool {
    if x.ncols() == 0 {
        return false;
    }
    let xtx = x.t().dot(x);
    match linalg::eigh(&xtx) {
        Ok((vals, _)) => {
            let lmax = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            lmax == 0.0 || vals.iter().any(|&v| v < 1e-10 * lmax)
        }
        Err(_) => true,
    }
}
