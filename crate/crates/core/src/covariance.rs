//! Covariance families: CAR, ICAR and graph-deformation (GDEF), plus the
//! Matern correlation functions they share.
//!
//! CAR places a sparse precision `(diag(W 1) - kappa W) / sigma^2` on the
//! node field; ICAR is its intrinsic kappa = 1 limit, proper only on the
//! sum-to-zero subspace. GDEF goes the other way around and builds a dense
//! covariance `sigma^2 rho_nu(D)` by applying a Matern correlation to the
//! quasi-Euclidean distances induced by the edge weights. Smoothness is
//! restricted to the half-integer cases with closed forms, nu in
//! {1/2, 3/2, 5/2} and the squared-exponential limit nu = infinity.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeWeights, Graph};
use crate::linalg::{self, Chol};
use crate::metric;
use crate::seed;

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

/// Largest node count for which a CAR/ICAR covariance is materialized
/// densely; beyond this only precision-based operations are available.
pub const DENSE_LIMIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Car,
    Icar,
    Gdef,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Family::Car => "car",
            Family::Icar => "icar",
            Family::Gdef => "gdef",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "car" => Ok(Family::Car),
            "icar" => Ok(Family::Icar),
            "gdef" => Ok(Family::Gdef),
            other => Err(Error::InvalidValue(format!(
                "unknown family '{other}', expected car, icar or gdef"
            ))),
        }
    }
}

/// Matern smoothness, restricted to the values with closed-form
/// correlations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothness {
    Half,
    ThreeHalves,
    FiveHalves,
    Infinity,
}

impl Smoothness {
    pub const ALL: [Smoothness; 4] = [
        Smoothness::Half,
        Smoothness::ThreeHalves,
        Smoothness::FiveHalves,
        Smoothness::Infinity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Smoothness::Half => "0.5",
            Smoothness::ThreeHalves => "1.5",
            Smoothness::FiveHalves => "2.5",
            Smoothness::Infinity => "inf",
        }
    }

    pub fn value(&self) -> f64 {
        match self {
            Smoothness::Half => 0.5,
            Smoothness::ThreeHalves => 1.5,
            Smoothness::FiveHalves => 2.5,
            Smoothness::Infinity => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Smoothness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Smoothness {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "0.5" | "1/2" => Ok(Smoothness::Half),
            "1.5" | "3/2" => Ok(Smoothness::ThreeHalves),
            "2.5" | "5/2" => Ok(Smoothness::FiveHalves),
            "inf" | "infinity" => Ok(Smoothness::Infinity),
            other => Err(Error::InvalidValue(format!(
                "unsupported smoothness '{other}'; supported: 0.5, 1.5, 2.5, inf"
            ))),
        }
    }
}

impl Serialize for Smoothness {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Smoothness {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Model specification shared by construction, sampling and the CLI.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CovarianceSpec {
    pub family: Family,
    /// Smoothness, used by the GDEF family only.
    pub nu: Smoothness,
    pub sigma2: f64,
    /// Spatial correlation parameter, used by the CAR family only.
    pub kappa: f64,
    /// Nugget variance added to the marginal covariance.
    pub tau2: f64,
    /// Mean level; sampling is zero-mean, callers add the offset.
    pub beta0: f64,
}

impl CovarianceSpec {
    pub fn gdef(nu: Smoothness, sigma2: f64) -> Self {
        CovarianceSpec {
            family: Family::Gdef,
            nu,
            sigma2,
            kappa: 0.0,
            tau2: 0.0,
            beta0: 0.0,
        }
    }

    pub fn car(sigma2: f64, kappa: f64) -> Self {
        CovarianceSpec {
            family: Family::Car,
            nu: Smoothness::Half,
            sigma2,
            kappa,
            tau2: 0.0,
            beta0: 0.0,
        }
    }

    pub fn icar() -> Self {
        CovarianceSpec {
            family: Family::Icar,
            nu: Smoothness::Half,
            sigma2: 1.0,
            kappa: 1.0,
            tau2: 0.0,
            beta0: 0.0,
        }
    }

    pub fn with_nugget(mut self, tau2: f64) -> Self {
        self.tau2 = tau2;
        self
    }

    pub fn with_mean(mut self, beta0: f64) -> Self {
        self.beta0 = beta0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2 > 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidValue(format!(
                "sigma2 must be positive and finite, got {}",
                self.sigma2
            )));
        }
        if self.family == Family::Car && !(self.kappa.abs() < 1.0) {
            return Err(Error::InvalidValue(format!(
                "CAR requires |kappa| < 1, got {}",
                self.kappa
            )));
        }
        if !(self.tau2 >= 0.0) || !self.tau2.is_finite() {
            return Err(Error::InvalidValue(format!(
                "tau2 must be nonnegative and finite, got {}",
                self.tau2
            )));
        }
        if !self.beta0.is_finite() {
            return Err(Error::InvalidValue("beta0 must be finite".into()));
        }
        Ok(())
    }
}

/// Matern correlation rho_nu(d) at unit range; rho(0) = 1 exactly.
pub fn matern_correlation(d: f64, nu: Smoothness) -> f64 {
    debug_assert!(d >= 0.0);
    match nu {
        Smoothness::Half => (-d).exp(),
        Smoothness::ThreeHalves => (1.0 + SQRT3 * d) * (-SQRT3 * d).exp(),
        Smoothness::FiveHalves => {
            (1.0 + SQRT5 * d + 5.0 * d * d / 3.0) * (-SQRT5 * d).exp()
        }
        Smoothness::Infinity => (-0.5 * d * d).exp(),
    }
}

/// Derivative d rho / d d of the closed forms; at d = 0 the right-hand
/// limit, which is -1 for nu = 1/2 and 0 otherwise.
pub fn matern_correlation_dd(d: f64, nu: Smoothness) -> f64 {
    debug_assert!(d >= 0.0);
    match nu {
        Smoothness::Half => -(-d).exp(),
        Smoothness::ThreeHalves => -3.0 * d * (-SQRT3 * d).exp(),
        Smoothness::FiveHalves => -(5.0 * d / 3.0) * (1.0 + SQRT5 * d) * (-SQRT5 * d).exp(),
        Smoothness::Infinity => -d * (-0.5 * d * d).exp(),
    }
}

/// A constructed covariance structure, in whichever form the family makes
/// cheap: dense covariance for GDEF, precision for CAR, spectral for ICAR.
#[derive(Debug, Clone)]
pub struct CovarianceRealization {
    pub family: Family,
    form: Form,
}

#[derive(Debug, Clone)]
enum Form {
    /// Dense covariance with its Cholesky factor.
    Dense { sigma: Array2<f64>, chol: Chol },
    /// CAR precision: Sigma = sigma2 M^-1 + tau2 I with M = diag(W1) - kappa W.
    CarPrec {
        m: Array2<f64>,
        chol_m: Chol,
        sigma2: f64,
        tau2: f64,
    },
    /// ICAR spectral structure: eigendecomposition of Q = diag(W1) - W,
    /// ascending eigenvalues; index 0 is the null mode.
    IcarSpec {
        evals: Array1<f64>,
        evecs: Array2<f64>,
    },
}

impl CovarianceRealization {
    pub fn p(&self) -> usize {
        match &self.form {
            Form::Dense { sigma, .. } => sigma.nrows(),
            Form::CarPrec { m, .. } => m.nrows(),
            Form::IcarSpec { evecs, .. } => evecs.nrows(),
        }
    }

    /// Dense covariance matrix. For CAR this inverts the precision (guarded
    /// by [`DENSE_LIMIT`]); for ICAR it returns the generalized covariance
    /// Q^+, the covariance of the sum-to-zero field.
    pub fn dense_sigma(&self) -> Result<Array2<f64>> {
        match &self.form {
            Form::Dense { sigma, .. } => Ok(sigma.clone()),
            Form::CarPrec {
                chol_m,
                sigma2,
                tau2,
                ..
            } => {
                let p = self.p();
                if p > DENSE_LIMIT {
                    return Err(Error::InvalidValue(format!(
                        "refusing to materialize dense {p} x {p} CAR covariance (limit {DENSE_LIMIT})"
                    )));
                }
                let mut sigma = chol_m.inv()?;
                sigma *= *sigma2;
                for i in 0..p {
                    sigma[[i, i]] += tau2;
                }
                Ok(sigma)
            }
            Form::IcarSpec { evals, evecs } => {
                let p = self.p();
                let mut scaled = evecs.clone();
                for (mut col, &l) in scaled.columns_mut().into_iter().zip(evals.iter()) {
                    let inv = if l > 0.0 { 1.0 / l } else { 0.0 };
                    col *= inv;
                }
                let mut sigma = scaled.dot(&evecs.t());
                linalg::symmetrize(&mut sigma);
                let _ = p;
                Ok(sigma)
            }
        }
    }

    /// log |Sigma|; None for the singular ICAR structure.
    pub fn log_det(&self) -> Option<f64> {
        match &self.form {
            Form::Dense { chol, .. } => Some(chol.ln_det()),
            Form::CarPrec {
                chol_m,
                sigma2,
                tau2,
                ..
            } => {
                if *tau2 > 0.0 {
                    return None; // no cheap form; go dense if needed
                }
                Some(self.p() as f64 * sigma2.ln() - chol_m.ln_det())
            }
            Form::IcarSpec { .. } => None,
        }
    }

    /// Draw `n` iid rows from the zero-mean Gaussian with this covariance.
    pub fn sample(&self, n: usize, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
        let p = self.p();
        match &self.form {
            Form::Dense { chol, .. } => {
                let z = standard_normal_matrix(n, p, rng);
                // row-wise y = L z  <=>  Y = Z L^T
                Ok(z.dot(&chol.factor().t()))
            }
            Form::CarPrec {
                chol_m,
                sigma2,
                tau2,
                ..
            } => {
                let sd = sigma2.sqrt();
                let tau = tau2.sqrt();
                let mut y = Array2::zeros((n, p));
                for mut row in y.axis_iter_mut(Axis(0)) {
                    let z: Array1<f64> =
                        Array1::from_iter((0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
                    let x = chol_m.prec_unwhiten(&z)?;
                    row.assign(&(&x * sd));
                    if *tau2 > 0.0 {
                        for v in row.iter_mut() {
                            *v += tau * rng.sample::<f64, _>(StandardNormal);
                        }
                    }
                }
                Ok(y)
            }
            Form::IcarSpec { evals, evecs } => {
                // spectral sampler on the positive eigenspace; the null mode
                // is dropped, which enforces sum(y) = 0
                let mut y = Array2::zeros((n, p));
                for mut row in y.axis_iter_mut(Axis(0)) {
                    let mut acc = Array1::<f64>::zeros(p);
                    for i in 1..p {
                        let l = evals[i];
                        let z: f64 = rng.sample(StandardNormal);
                        let scale = z / l.sqrt();
                        acc.scaled_add(scale, &evecs.column(i));
                    }
                    let mean = acc.sum() / p as f64;
                    acc -= mean;
                    row.assign(&acc);
                }
                Ok(y)
            }
        }
    }
}

fn standard_normal_matrix(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut z = Array2::zeros((n, p));
    for v in z.iter_mut() {
        *v = rng.sample(StandardNormal);
    }
    z
}

/// GDEF covariance `sigma2 rho_nu(D) + tau2 I` with D the quasi-Euclidean
/// distance matrix of (g, w). Positive definite for any positive weights;
/// if rounding makes the Cholesky fail, a jitter of `1e-10 sigma2` is added
/// once before giving up.
pub fn gdef_covariance(
    g: &Graph,
    w: &EdgeWeights,
    spec: &CovarianceSpec,
) -> Result<CovarianceRealization> {
    if spec.family != Family::Gdef {
        return Err(Error::InvalidValue(format!(
            "gdef_covariance called with family {}",
            spec.family
        )));
    }
    spec.validate()?;
    let dist = metric::quasi_euclidean_distances(g, w)?;
    let sigma = gdef_sigma_from_dist(&dist, spec);
    dense_realization(sigma, Family::Gdef, spec.sigma2)
}

/// Assemble the GDEF covariance from an existing distance matrix.
pub fn gdef_sigma_from_dist(dist: &Array2<f64>, spec: &CovarianceSpec) -> Array2<f64> {
    let p = dist.nrows();
    let mut sigma = dist.mapv(|d| spec.sigma2 * matern_correlation(d, spec.nu));
    for i in 0..p {
        sigma[[i, i]] = spec.sigma2 + spec.tau2;
    }
    sigma
}

pub(crate) fn dense_realization(
    mut sigma: Array2<f64>,
    family: Family,
    jitter_scale: f64,
) -> Result<CovarianceRealization> {
    match Chol::new(&sigma) {
        Ok(chol) => Ok(CovarianceRealization {
            family,
            form: Form::Dense { sigma, chol },
        }),
        Err(_) => {
            let jitter = 1e-10 * jitter_scale;
            for i in 0..sigma.nrows() {
                sigma[[i, i]] += jitter;
            }
            match Chol::new(&sigma) {
                Ok(chol) => Ok(CovarianceRealization {
                    family,
                    form: Form::Dense { sigma, chol },
                }),
                Err(_) => {
                    let min_eig = linalg::eigh(&sigma)
                        .map(|(vals, _)| vals[0])
                        .unwrap_or(f64::NAN);
                    Err(Error::Numerical(format!(
                        "covariance not positive definite even after jitter; smallest eigenvalue {min_eig:.3e}"
                    )))
                }
            }
        }
    }
}

/// CAR precision `Q = (diag(W 1) - kappa W) / sigma2`. The realization keeps
/// the Cholesky factor of `M = diag(W 1) - kappa W` so sampling and
/// densification need no further factorization.
pub fn car_precision(
    g: &Graph,
    w: &EdgeWeights,
    spec: &CovarianceSpec,
) -> Result<CovarianceRealization> {
    if spec.family != Family::Car {
        return Err(Error::InvalidValue(format!(
            "car_precision called with family {}",
            spec.family
        )));
    }
    spec.validate()?;
    let m = car_m_matrix(g, w, spec.kappa)?;
    let chol_m = Chol::new(&m)
        .map_err(|_| Error::Numerical("CAR precision is not positive definite".into()))?;
    Ok(CovarianceRealization {
        family: Family::Car,
        form: Form::CarPrec {
            m,
            chol_m,
            sigma2: spec.sigma2,
            tau2: spec.tau2,
        },
    })
}

/// `M = diag(W 1) - kappa W`, the unscaled CAR precision.
pub fn car_m_matrix(g: &Graph, w: &EdgeWeights, kappa: f64) -> Result<Array2<f64>> {
    g.check_weights(w)?;
    let p = g.p();
    let mut m = Array2::zeros((p, p));
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        let we = w.values()[e];
        m[[i, j]] -= kappa * we;
        m[[j, i]] -= kappa * we;
        m[[i, i]] += we;
        m[[j, j]] += we;
    }
    Ok(m)
}

/// ICAR structure `Q = diag(W 1) - W` (rank p - 1), held spectrally so the
/// sum-to-zero field can be sampled and its generalized covariance queried.
pub fn icar_structure(g: &Graph, w: &EdgeWeights) -> Result<CovarianceRealization> {
    let q = metric::laplacian(g, w)?;
    let (evals, evecs) = linalg::eigh(&q)?;
    Ok(CovarianceRealization {
        family: Family::Icar,
        form: Form::IcarSpec { evals, evecs },
    })
}

/// Draw `n` iid rows from N(0, Sigma) with a fresh generator for `seed`.
pub fn sample_gaussian(
    real: &CovarianceRealization,
    n: usize,
    seed: u64,
) -> Result<Array2<f64>> {
    real.sample(n, &mut seed::rng(seed))
}

/// Draw `n` iid rows of N(0, sigma) for an explicit dense covariance.
pub fn sample_dense(
    sigma: &Array2<f64>,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Array2<f64>> {
    let chol = Chol::new(sigma)?;
    Ok(standard_normal_matrix(n, sigma.nrows(), rng).dot(&chol.factor().t()))
}
