//! Likelihood-based and Bayesian inference for CAR and GDEF models.
//!
//! Both families share a parameter layout: weight coefficients first (the
//! free entries of eta, then psi when covariates are present), followed by
//! log sigma^2, the transformed kappa for CAR, log tau^2 when a nugget is
//! estimated, and finally beta_0 when the mean is estimated. Optimization
//! and sampling run entirely in these transformed, unconstrained
//! coordinates; reporting maps back to the natural scale.
//!
//! The numerical core is organized around two traits. A
//! [`CovarianceModel`] knows its parameter layout and can instantiate
//! itself at a parameter vector, yielding a [`PreparedModel`]: the
//! covariance inverse, its log-determinant, analytic first derivatives
//! contracted against an arbitrary symmetric matrix (for scores), and the
//! full per-parameter derivative matrices (for expected information). The
//! generic engine in this module supplies everything else: likelihood
//! evaluation, Fisher scoring, Wald intervals, information criteria, basis
//! size selection, conditional smoothing and MALA sampling.

mod car;
mod engine;
mod gdef;
mod mala;
mod matern;

pub use car::CarModel;
pub use engine::{
    default_start, fit_mle, information_criteria, log_likelihood, score_and_information,
    score_only, select_basis_size, smooth_field, wald_intervals, FitOptions, FitResult,
    IterRecord, SelectionRow, SelectionTable, Smoothed, WaldInterval,
};
pub use gdef::{dsigma_dw, GdefModel, GdefSettings};
pub use mala::{
    batch_means_se, mala_sample, MalaOptions, MalaPrior, PosteriorChain, WeightPrior,
};
pub use matern::{coord_distances, matern_covariance_from_coords, CoordMaternModel};

use ndarray::{Array1, Array2, ArrayView1};

use crate::basis::{EdgeBasis, EdgeCovariates};
use crate::error::{Error, Result};
use crate::linalg::Chol;

/// Monotone reparameterizations between the unconstrained optimization
/// scale and the natural scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    Identity,
    /// natural = exp(transformed); for variances.
    Log,
    /// natural = tanh(transformed / 2), the inverse of
    /// logit((kappa + 1) / 2); for the CAR correlation parameter.
    TanhHalf,
}

impl Transform {
    pub fn to_natural(self, t: f64) -> f64 {
        match self {
            Transform::Identity => t,
            Transform::Log => t.exp(),
            Transform::TanhHalf => (0.5 * t).tanh(),
        }
    }

    pub fn from_natural(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::TanhHalf => ((1.0 + x) / (1.0 - x)).ln(),
        }
    }

    /// d natural / d transformed, for delta-method standard errors.
    pub fn jacobian(self, t: f64) -> f64 {
        match self {
            Transform::Identity => 1.0,
            Transform::Log => t.exp(),
            Transform::TanhHalf => {
                let k = (0.5 * t).tanh();
                0.5 * (1.0 - k * k)
            }
        }
    }
}

/// Which part of the model a parameter belongs to; lets generic code locate
/// the variance, nugget and mean slots without knowing the family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamBlock {
    /// Weight coefficient multiplying design column `.0`.
    Weight(usize),
    LogSigma2,
    /// Transformed CAR correlation.
    Kappa,
    /// Log range of a coordinate-space correlation.
    Range,
    LogTau2,
    Beta0,
}

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub transform: Transform,
    pub block: ParamBlock,
}

impl ParamSpec {
    fn new(name: impl Into<String>, transform: Transform, block: ParamBlock) -> Self {
        ParamSpec {
            name: name.into(),
            transform,
            block,
        }
    }
}

/// Design matrix mapping coefficients to log edge weights, `log w = X c`.
#[derive(Debug, Clone)]
pub struct WeightDesign {
    matrix: Array2<f64>,
    names: Vec<String>,
}

impl WeightDesign {
    pub fn new(matrix: Array2<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != matrix.ncols() {
            return Err(Error::dim("design names", matrix.ncols(), names.len()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("design contains non-finite entries".into()));
        }
        Ok(WeightDesign { matrix, names })
    }

    /// No free weight coefficients: weights stay at 1.
    pub fn empty(q: usize) -> Self {
        WeightDesign {
            matrix: Array2::zeros((q, 0)),
            names: Vec::new(),
        }
    }

    /// One coefficient per edge (full-W mode): `log w_e = c_e`.
    pub fn identity(q: usize) -> Self {
        WeightDesign {
            matrix: Array2::eye(q),
            names: (1..=q).map(|e| format!("w{e}")).collect(),
        }
    }

    /// Design from a basis and optional covariates, in packing order
    /// (eta block first, then psi). `drop_intercept` removes the first
    /// basis column, fixing eta_1 = 0.
    pub fn from_model_parts(
        basis: &EdgeBasis,
        covariates: Option<&EdgeCovariates>,
        drop_intercept: bool,
    ) -> Result<Self> {
        let q = basis.q();
        let start = usize::from(drop_intercept);
        let k_free = basis.k() - start;
        let r = covariates.map_or(0, |c| c.r());
        let mut matrix = Array2::zeros((q, k_free + r));
        let mut names = Vec::with_capacity(k_free + r);
        for (out, col) in (start..basis.k()).enumerate() {
            matrix
                .column_mut(out)
                .assign(&basis.vectors().column(col));
            names.push(format!("eta{}", col + 1));
        }
        if let Some(cov) = covariates {
            if cov.matrix().nrows() != q {
                return Err(Error::dim("covariate rows", q, cov.matrix().nrows()));
            }
            for (j, name) in cov.names().iter().enumerate() {
                matrix.column_mut(k_free + j).assign(&cov.matrix().column(j));
                names.push(format!("psi_{name}"));
            }
        }
        WeightDesign::new(matrix, names)
    }

    pub fn m(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn q(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// `w = exp(X c)`.
    pub fn weights(&self, coef: &ArrayView1<f64>) -> Result<crate::graph::EdgeWeights> {
        if coef.len() != self.m() {
            return Err(Error::dim("weight coefficients", self.m(), coef.len()));
        }
        let log_w = self.matrix.dot(coef);
        crate::graph::EdgeWeights::new(log_w.mapv(f64::exp))
    }
}

/// Whether sigma^2 is estimated or held fixed (the simulation studies fix
/// it at 1 so the weight scale is identified without constraints).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sigma2Mode {
    Free,
    Fixed(f64),
}

/// A covariance model with a fixed parameter layout, instantiable at any
/// transformed parameter vector.
pub trait CovarianceModel: Send + Sync {
    fn params(&self) -> &[ParamSpec];

    /// Node count of the underlying graph.
    fn p(&self) -> usize;

    fn prepare(&self, theta: &ArrayView1<f64>) -> Result<Box<dyn PreparedModel + '_>>;

    fn dim(&self) -> usize {
        self.params().len()
    }

    fn param_names(&self) -> Vec<String> {
        self.params().iter().map(|p| p.name.clone()).collect()
    }

    fn find_block(&self, block: ParamBlock) -> Option<usize> {
        self.params().iter().position(|p| p.block == block)
    }

    /// Mean level beta_0 encoded in `theta`, or 0 when the mean is not a
    /// parameter.
    fn beta0_of(&self, theta: &ArrayView1<f64>) -> f64 {
        self.find_block(ParamBlock::Beta0)
            .map_or(0.0, |i| theta[i])
    }

    fn to_natural(&self, theta: &ArrayView1<f64>) -> Array1<f64> {
        Array1::from_iter(
            self.params()
                .iter()
                .zip(theta.iter())
                .map(|(p, &t)| p.transform.to_natural(t)),
        )
    }
}

/// A model instantiated at a specific parameter value.
pub trait PreparedModel {
    /// log |Sigma|.
    fn ln_det_sigma(&self) -> f64;

    /// Explicit covariance inverse.
    fn sigma_inv(&self) -> &Array2<f64>;

    /// Dense covariance; may cost an inversion for precision-form models.
    fn sigma(&self) -> Result<Array2<f64>>;

    /// Cholesky factor of Sigma for sampling, when cheaply available.
    fn chol_sigma(&self) -> Result<Chol> {
        Chol::new(&self.sigma()?)
    }

    /// Score contractions `tr(G dSigma/d theta_a)` for every parameter.
    /// The beta_0 slot, which does not enter Sigma, is left at zero; the
    /// engine fills in its data term.
    fn score_from_g(&self, gmat: &Array2<f64>) -> Result<Array1<f64>>;

    /// Per-parameter derivative matrices `dSigma/d theta_a`; `None` for
    /// beta_0.
    fn dsigma_all(&self) -> Result<Vec<Option<Array2<f64>>>>;
}

/// Standard-normal quantile (Acklam's rational approximation, absolute
/// error below 1.2e-9); enough for interval endpoints.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile requires p in (0,1)");
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let plow = 0.02425;
    if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transform_round_trips() {
        for t in [Transform::Identity, Transform::Log, Transform::TanhHalf] {
            for x in [-1.3, 0.0, 0.7, 2.0] {
                let nat = t.to_natural(x);
                let back = t.from_natural(nat);
                assert!((back - x).abs() < 1e-12, "{t:?} at {x}: {back}");
            }
        }
        // natural-domain spot checks
        assert!((Transform::Log.to_natural(0.0) - 1.0).abs() < 1e-15);
        assert!((Transform::TanhHalf.to_natural(0.0)).abs() < 1e-15);
        let k = Transform::TanhHalf.to_natural(3.0);
        assert!(k > 0.0 && k < 1.0);
    }

    #[test]
    fn transform_jacobians_match_finite_differences() {
        let h = 1e-6;
        for t in [Transform::Identity, Transform::Log, Transform::TanhHalf] {
            for x in [-0.8, 0.1, 1.4] {
                let fd = (t.to_natural(x + h) - t.to_natural(x - h)) / (2.0 * h);
                assert!((t.jacobian(x) - fd).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn normal_quantile_known_values() {
        assert!((normal_quantile(0.5)).abs() < 1e-9);
        assert!((normal_quantile(0.975) - 1.959_963_985).abs() < 1e-6);
        assert!((normal_quantile(0.95) - 1.644_853_627).abs() < 1e-6);
        assert!((normal_quantile(0.025) + 1.959_963_985).abs() < 1e-6);
    }

    #[test]
    fn design_from_parts_layout() {
        let g = crate::graph::Graph::lattice(3, 3).unwrap();
        let b = crate::basis::lgl_eigenbasis(&g, 4).unwrap();
        let d = WeightDesign::from_model_parts(&b, None, false).unwrap();
        assert_eq!(d.m(), 4);
        assert_eq!(d.names()[0], "eta1");
        let d = WeightDesign::from_model_parts(&b, None, true).unwrap();
        assert_eq!(d.m(), 3);
        assert_eq!(d.names()[0], "eta2");
    }

    #[test]
    fn design_weights_exponential() {
        let g = crate::graph::Graph::lattice(2, 2).unwrap();
        let b = crate::basis::lgl_eigenbasis(&g, 1).unwrap();
        let d = WeightDesign::from_model_parts(&b, None, false).unwrap();
        let w = d.weights(&ndarray::array![2.0].view()).unwrap();
        for v in w.values() {
            assert!((*v - 1.0f64.exp()).abs() < 1e-12);
        }
    }
}
