//! Thin wrappers over LAPACK-backed dense linear algebra.
//!
//! Everything the rest of the crate needs is funneled through this module:
//! symmetric eigendecomposition, Cholesky factorization with solves in both
//! whitening (L^-1 b) and full (A^-1 b) form, and a few trace/inner-product
//! helpers. Keeping the ndarray-linalg surface in one place makes the
//! numerical conventions (lower factors, ascending eigenvalues) explicit.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use ndarray_linalg::{Cholesky, Diag, Eigh, SolveTriangular, UPLO};

use crate::error::{Error, Result};

/// Symmetric eigendecomposition `A = V diag(vals) V^T` with eigenvalues in
/// ascending order. Only the lower triangle of `a` is referenced.
pub fn eigh(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    a.eigh(UPLO::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e}")))
}

/// Cholesky factorization `A = L L^T` of a symmetric positive definite
/// matrix. Stores both `L` and `L^T` so triangular solves always run on
/// standard-layout operands.
#[derive(Debug, Clone)]
pub struct Chol {
    l: Array2<f64>,
    lt: Array2<f64>,
}

impl Chol {
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        let l = a
            .cholesky(UPLO::Lower)
            .map_err(|e| Error::Numerical(format!("cholesky failed: {e}")))?;
        let lt = l.t().to_owned();
        Ok(Chol { l, lt })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor(&self) -> ArrayView2<'_, f64> {
        self.l.view()
    }

    /// log det A = 2 sum log L_ii.
    pub fn ln_det(&self) -> f64 {
        2.0 * self.l.diag().iter().map(|v| v.ln()).sum::<f64>()
    }

    /// Whitening solve `L^-1 b`.
    pub fn half_solve_vec(&self, b: &Array1<f64>) -> Result<Array1<f64>> {
        self.l
            .solve_triangular(UPLO::Lower, Diag::NonUnit, b)
            .map_err(|e| Error::Numerical(format!("triangular solve failed: {e}")))
    }

    /// Whitening solve with matrix right-hand side, `L^-1 B`.
    pub fn half_solve_mat(&self, b: &Array2<f64>) -> Result<Array2<f64>> {
        self.l
            .solve_triangular(UPLO::Lower, Diag::NonUnit, b)
            .map_err(|e| Error::Numerical(format!("triangular solve failed: {e}")))
    }

    /// Full solve `A^-1 b`.
    pub fn solve_vec(&self, b: &Array1<f64>) -> Result<Array1<f64>> {
        let y = self.half_solve_vec(b)?;
        self.lt
            .solve_triangular(UPLO::Upper, Diag::NonUnit, &y)
            .map_err(|e| Error::Numerical(format!("triangular solve failed: {e}")))
    }

    /// Full solve with matrix right-hand side, `A^-1 B`.
    pub fn solve_mat(&self, b: &Array2<f64>) -> Result<Array2<f64>> {
        let y = self.half_solve_mat(b)?;
        self.lt
            .solve_triangular(UPLO::Upper, Diag::NonUnit, &y)
            .map_err(|e| Error::Numerical(format!("triangular solve failed: {e}")))
    }

    /// Dense inverse `A^-1`, symmetrized against round-off.
    pub fn inv(&self) -> Result<Array2<f64>> {
        let mut inv = self.solve_mat(&Array2::eye(self.dim()))?;
        symmetrize(&mut inv);
        Ok(inv)
    }

    /// Quadratic form `b^T A^-1 b` via one whitening solve.
    pub fn inv_quad(&self, b: &Array1<f64>) -> Result<f64> {
        let y = self.half_solve_vec(b)?;
        Ok(y.dot(&y))
    }

    /// `L z`, mapping iid standard normals to draws from N(0, A).
    pub fn unwhiten(&self, z: &Array1<f64>) -> Array1<f64> {
        self.l.dot(z)
    }

    /// Solve `L^T x = z`; used to turn iid normals into draws from
    /// N(0, A^-1) when A is a precision matrix.
    pub fn prec_unwhiten(&self, z: &Array1<f64>) -> Result<Array1<f64>> {
        self.lt
            .solve_triangular(UPLO::Upper, Diag::NonUnit, z)
            .map_err(|e| Error::Numerical(format!("triangular solve failed: {e}")))
    }
}

/// Cholesky with a single retry after adding `jitter` to the diagonal of
/// `a` (in place); the error on a second failure reports the smallest
/// eigenvalue.
pub fn chol_jittered(a: &mut Array2<f64>, jitter: f64) -> Result<Chol> {
    if let Ok(c) = Chol::new(a) {
        return Ok(c);
    }
    for i in 0..a.nrows() {
        a[[i, i]] += jitter;
    }
    Chol::new(a).map_err(|_| {
        let min_eig = eigh(a).map(|(v, _)| v[0]).unwrap_or(f64::NAN);
        Error::Numerical(format!(
            "covariance not positive definite after jitter; smallest eigenvalue {min_eig:.3e}"
        ))
    })
}

/// Replace `a` with (a + a^T)/2 in place; cleans up asymmetry drift after
/// sandwich products.
pub fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = m;
            a[[j, i]] = m;
        }
    }
}

/// Frobenius inner product sum_ij A_ij B_ij.
pub fn frob_inner(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, x, y| acc + x * y)
}

/// trace(A B) for general square A, B of matching dimension.
pub fn trace_prod(a: &ArrayView2<f64>, b: &ArrayView2<f64>) -> f64 {
    frob_inner(a, &b.t())
}

/// Outer-product accumulation `s += r r^T`.
pub fn syr(s: &mut Array2<f64>, r: &ArrayView1<f64>) {
    let n = r.len();
    for i in 0..n {
        let ri = r[i];
        if ri == 0.0 {
            continue;
        }
        for j in 0..n {
            s[[i, j]] += ri * r[j];
        }
    }
}
