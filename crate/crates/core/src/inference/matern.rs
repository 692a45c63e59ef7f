//! Matern covariance in coordinate space: the classical competitor fitted
//! alongside the graph models, with a free range parameter.
//!
//! Sigma_ij = sigma^2 rho_nu(d_ij / range) + tau^2 1{i=j} over Euclidean
//! distances between supplied coordinates. Derivatives are direct:
//! d Sigma_ij / d log range = -sigma^2 rho'_nu(d/range) d / range.

use ndarray::{Array1, Array2};

use crate::covariance::{matern_correlation, matern_correlation_dd, Smoothness};
use crate::error::{Error, Result};
use crate::linalg;

use super::{CovarianceModel, ParamBlock, ParamSpec, PreparedModel, Transform};

/// Pairwise Euclidean distances between planar coordinates.
pub fn coord_distances(coords: &[(f64, f64)]) -> Array2<f64> {
    let p = coords.len();
    let mut d = Array2::zeros((p, p));
    for i in 0..p {
        for j in (i + 1)..p {
            let dx = coords[i].0 - coords[j].0;
            let dy = coords[i].1 - coords[j].1;
            let dist = (dx * dx + dy * dy).sqrt();
            d[[i, j]] = dist;
            d[[j, i]] = dist;
        }
    }
    d
}

/// Dense Matern covariance over coordinates:
/// `sigma2 rho_nu(d / range) + tau2 I`.
pub fn matern_covariance_from_coords(
    coords: &[(f64, f64)],
    nu: Smoothness,
    sigma2: f64,
    range: f64,
    tau2: f64,
) -> Result<Array2<f64>> {
    if coords.len() < 2 {
        return Err(Error::InvalidValue("need at least two coordinates".into()));
    }
    if !(sigma2 > 0.0) || !(range > 0.0) || tau2 < 0.0 {
        return Err(Error::InvalidValue(format!(
            "invalid Matern parameters: sigma2 {sigma2}, range {range}, tau2 {tau2}"
        )));
    }
    let d = coord_distances(coords);
    let p = coords.len();
    let mut sigma = d.mapv(|v| sigma2 * matern_correlation(v / range, nu));
    for i in 0..p {
        sigma[[i, i]] = sigma2 + tau2;
    }
    Ok(sigma)
}

#[derive(Debug, Clone)]
pub struct CoordMaternModel {
    dist: Array2<f64>,
    nu: Smoothness,
    nugget: bool,
    estimate_mean: bool,
    params: Vec<ParamSpec>,
}

impl CoordMaternModel {
    pub fn new(
        coords: &[(f64, f64)],
        nu: Smoothness,
        nugget: bool,
        estimate_mean: bool,
    ) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidValue("need at least two coordinates".into()));
        }
        let dist = coord_distances(coords);
        let mut params = vec![
            ParamSpec::new("sigma2", Transform::Log, ParamBlock::LogSigma2),
            ParamSpec::new("range", Transform::Log, ParamBlock::Range),
        ];
        if nugget {
            params.push(ParamSpec::new("tau2", Transform::Log, ParamBlock::LogTau2));
        }
        if estimate_mean {
            params.push(ParamSpec::new("beta0", Transform::Identity, ParamBlock::Beta0));
        }
        Ok(CoordMaternModel {
            dist,
            nu,
            nugget,
            estimate_mean,
            params,
        })
    }

    pub fn nu(&self) -> Smoothness {
        self.nu
    }

    pub fn has_nugget(&self) -> bool {
        self.nugget
    }

    pub fn estimates_mean(&self) -> bool {
        self.estimate_mean
    }
}

impl CovarianceModel for CoordMaternModel {
    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn p(&self) -> usize {
        self.dist.nrows()
    }

    fn prepare(&self, theta: &ndarray::ArrayView1<f64>) -> Result<Box<dyn PreparedModel + '_>> {
        if theta.len() != self.params.len() {
            return Err(Error::dim("theta", self.params.len(), theta.len()));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite parameter vector".into()));
        }
        let sigma2 = theta[0].exp();
        let range = theta[1].exp();
        let tau2 = self.find_block(ParamBlock::LogTau2).map_or(0.0, |i| theta[i].exp());
        let p = self.p();
        let mut sigma = self
            .dist
            .mapv(|d| sigma2 * matern_correlation(d / range, self.nu));
        for i in 0..p {
            sigma[[i, i]] = sigma2 + tau2;
        }
        let chol = linalg::chol_jittered(&mut sigma, 1e-10 * sigma2)?;
        let ln_det = chol.ln_det();
        let sigma_inv = chol.inv()?;
        Ok(Box::new(MaternPrepared {
            model: self,
            sigma2,
            range,
            tau2,
            sigma,
            sigma_inv,
            ln_det,
        }))
    }
}

struct MaternPrepared<'a> {
    model: &'a CoordMaternModel,
    sigma2: f64,
    range: f64,
    tau2: f64,
    sigma: Array2<f64>,
    sigma_inv: Array2<f64>,
    ln_det: f64,
}

impl MaternPrepared<'_> {
    /// dSigma/d log range, zero diagonal.
    fn dsigma_drange(&self) -> Array2<f64> {
        let p = self.model.p();
        let mut out = Array2::zeros((p, p));
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    let u = self.model.dist[[i, j]] / self.range;
                    out[[i, j]] = -self.sigma2 * matern_correlation_dd(u, self.model.nu) * u;
                }
            }
        }
        out
    }
}

impl PreparedModel for MaternPrepared<'_> {
    fn ln_det_sigma(&self) -> f64 {
        self.ln_det
    }

    fn sigma_inv(&self) -> &Array2<f64> {
        &self.sigma_inv
    }

    fn sigma(&self) -> Result<Array2<f64>> {
        Ok(self.sigma.clone())
    }

    fn score_from_g(&self, gmat: &Array2<f64>) -> Result<Array1<f64>> {
        let mut score = Array1::zeros(self.model.params.len());
        for (idx, spec) in self.model.params.iter().enumerate() {
            match spec.block {
                ParamBlock::LogSigma2 => {
                    let tr_g: f64 = gmat.diag().sum();
                    score[idx] =
                        linalg::frob_inner(&gmat.view(), &self.sigma.view()) - self.tau2 * tr_g;
                }
                ParamBlock::Range => {
                    score[idx] =
                        linalg::frob_inner(&gmat.view(), &self.dsigma_drange().view());
                }
                ParamBlock::LogTau2 => {
                    score[idx] = self.tau2 * gmat.diag().sum();
                }
                _ => {}
            }
        }
        Ok(score)
    }

    fn dsigma_all(&self) -> Result<Vec<Option<Array2<f64>>>> {
        let p = self.model.p();
        let mut out = Vec::with_capacity(self.model.params.len());
        for spec in &self.model.params {
            let ds = match spec.block {
                ParamBlock::LogSigma2 => {
                    let mut ds = self.sigma.clone();
                    for i in 0..p {
                        ds[[i, i]] -= self.tau2;
                    }
                    Some(ds)
                }
                ParamBlock::Range => Some(self.dsigma_drange()),
                ParamBlock::LogTau2 => {
                    let mut ds = Array2::zeros((p, p));
                    for i in 0..p {
                        ds[[i, i]] = self.tau2;
                    }
                    Some(ds)
                }
                ParamBlock::Beta0 => None,
                ParamBlock::Weight(_) | ParamBlock::Kappa => {
                    return Err(Error::InvalidValue(
                        "coordinate Matern model has no weight or kappa parameters".into(),
                    ))
                }
            };
            out.push(ds);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{log_likelihood, score_only, smooth_field};
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn covariance_from_coords_spot_values() {
        let coords = [(0.0, 0.0), (1.0, 0.0), (0.0, 2.0)];
        let s = matern_covariance_from_coords(&coords, Smoothness::Half, 2.0, 1.0, 0.5).unwrap();
        assert_abs_diff_eq!(s[[0, 0]], 2.5, epsilon = 1e-12);
        assert_abs_diff_eq!(s[[0, 1]], 2.0 * (-1.0f64).exp(), epsilon = 1e-12);
        assert_abs_diff_eq!(s[[0, 2]], 2.0 * (-2.0f64).exp(), epsilon = 1e-12);
        // doubling the range halves the effective distance
        let s2 = matern_covariance_from_coords(&coords, Smoothness::Half, 2.0, 2.0, 0.5).unwrap();
        assert_abs_diff_eq!(s2[[0, 1]], 2.0 * (-0.5f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn score_matches_finite_differences() {
        let coords: Vec<(f64, f64)> = (0..3)
            .flat_map(|r| (0..3).map(move |c| (r as f64, c as f64)))
            .collect();
        let model = CoordMaternModel::new(&coords, Smoothness::FiveHalves, true, true).unwrap();
        let mut rng = crate::seed::rng(15);
        use rand::Rng;
        let y = ndarray::Array2::from_shape_fn((2, 9), |_| rng.random_range(-1.0..1.0));
        let theta = array![0.1, 0.4, -1.0, 0.2];
        let (_, score) = score_only(&model, &theta.view(), &y.view()).unwrap();
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            tp[i] += h;
            let mut tm = theta.clone();
            tm[i] -= h;
            let fd = (log_likelihood(&model, &tp.view(), &y.view()).unwrap()
                - log_likelihood(&model, &tm.view(), &y.view()).unwrap())
                / (2.0 * h);
            assert!(
                (score[i] - fd).abs() < 1e-5 * score[i].abs().max(fd.abs()).max(1.0),
                "param {i}: analytic {} fd {fd}",
                score[i]
            );
        }
    }

    #[test]
    fn smooth_field_two_point_hand_case() {
        // far-apart points make Sigma_sp = I exactly; with sigma2 = tau2 = 1
        // and y = (2, 0): z_hat = (1, 0), var = 1/2, residual = (1, 0)
        let coords = [(0.0, 0.0), (1e6, 0.0)];
        let model = CoordMaternModel::new(&coords, Smoothness::Half, true, false).unwrap();
        let theta = array![0.0, 0.0, 0.0];
        let y = array![[2.0, 0.0]];
        let sm = smooth_field(&model, &theta.view(), &y.view()).unwrap();
        assert_abs_diff_eq!(sm.mean[[0, 0]], 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sm.mean[[0, 1]], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(sm.var[0], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(sm.var[1], 0.5, epsilon = 1e-10);
        assert_abs_diff_eq!(sm.residuals[[0, 0]], 1.0, epsilon = 1e-10);
    }
}
