//! CAR model in precision form: Sigma = sigma^2 M^-1 + tau^2 I with
//! M = diag(W 1) - kappa W.
//!
//! All score contractions reduce to gathers from the single matrix
//! `G~ = sigma^2 M^-1 G M^-1`, because every derivative of M is supported
//! on an edge pattern: `dM/dw_e = E_ii + E_jj - kappa (E_ij + E_ji)` and
//! `dM/dkappa = -W`, so
//!
//! ```text
//! tr(G dSigma/dw_e)  = -(G~_ii + G~_jj - 2 kappa G~_ij)
//! tr(G dSigma/dkappa) = 2 sum_e w_e G~_ij.
//! ```
//!
//! Without a nugget the inverse is explicit (Sigma^-1 = M / sigma^2) and
//! log|Sigma| = p log sigma^2 - log|M|, so likelihood evaluation costs one
//! Cholesky of the assembled precision.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::graph::{EdgeWeights, Graph};
use crate::linalg::Chol;

use super::{
    CovarianceModel, ParamBlock, ParamSpec, PreparedModel, Sigma2Mode, Transform, WeightDesign,
};

#[derive(Debug, Clone)]
pub struct CarModel {
    graph: Graph,
    design: WeightDesign,
    sigma2: Sigma2Mode,
    nugget: bool,
    estimate_mean: bool,
    params: Vec<ParamSpec>,
}

impl CarModel {
    pub fn new(
        graph: Graph,
        design: WeightDesign,
        sigma2: Sigma2Mode,
        nugget: bool,
        estimate_mean: bool,
    ) -> Result<Self> {
        if design.q() != graph.q() {
            return Err(Error::dim("design rows", graph.q(), design.q()));
        }
        let mut params = Vec::with_capacity(design.m() + 4);
        for (j, name) in design.names().iter().enumerate() {
            params.push(ParamSpec::new(
                name.clone(),
                Transform::Identity,
                ParamBlock::Weight(j),
            ));
        }
        if matches!(sigma2, Sigma2Mode::Free) {
            params.push(ParamSpec::new("sigma2", Transform::Log, ParamBlock::LogSigma2));
        }
        params.push(ParamSpec::new("kappa", Transform::TanhHalf, ParamBlock::Kappa));
        if nugget {
            params.push(ParamSpec::new("tau2", Transform::Log, ParamBlock::LogTau2));
        }
        if estimate_mean {
            params.push(ParamSpec::new("beta0", Transform::Identity, ParamBlock::Beta0));
        }
        Ok(CarModel {
            graph,
            design,
            sigma2,
            nugget,
            estimate_mean,
            params,
        })
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn design(&self) -> &WeightDesign {
        &self.design
    }

    pub fn has_nugget(&self) -> bool {
        self.nugget
    }

    pub fn estimates_mean(&self) -> bool {
        self.estimate_mean
    }

    pub fn weights_of(&self, theta: &ndarray::ArrayView1<f64>) -> Result<EdgeWeights> {
        if theta.len() != self.params.len() {
            return Err(Error::dim("theta", self.params.len(), theta.len()));
        }
        let coef = theta.slice(ndarray::s![..self.design.m()]);
        self.design.weights(&coef)
    }
}

impl CovarianceModel for CarModel {
    fn params(&self) -> &[ParamSpec] {
        &self.params
    }

    fn p(&self) -> usize {
        self.graph.p()
    }

    fn prepare(&self, theta: &ndarray::ArrayView1<f64>) -> Result<Box<dyn PreparedModel + '_>> {
        if theta.len() != self.params.len() {
            return Err(Error::dim("theta", self.params.len(), theta.len()));
        }
        if theta.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite parameter vector".into()));
        }
        let w = self.weights_of(theta)?;
        let kappa = self
            .find_block(ParamBlock::Kappa)
            .map(|i| Transform::TanhHalf.to_natural(theta[i]))
            .expect("CAR always has kappa");
        let sigma2 = match self.sigma2 {
            Sigma2Mode::Fixed(v) => v,
            Sigma2Mode::Free => {
                let i = self.find_block(ParamBlock::LogSigma2).expect("free sigma2");
                theta[i].exp()
            }
        };
        let tau2 = self.find_block(ParamBlock::LogTau2).map_or(0.0, |i| theta[i].exp());

        let p = self.graph.p();
        let mut m_mat = Array2::zeros((p, p));
        for (e, &(i, j)) in self.graph.edges().iter().enumerate() {
            let we = w.values()[e];
            m_mat[[i, i]] += we;
            m_mat[[j, j]] += we;
            m_mat[[i, j]] -= kappa * we;
            m_mat[[j, i]] -= kappa * we;
        }
        let chol_m = Chol::new(&m_mat)
            .map_err(|_| Error::Numerical("CAR precision not positive definite".into()))?;
        let ln_det_m = chol_m.ln_det();
        let m_inv = chol_m.inv()?;
        let mut sigma = m_inv.mapv(|v| sigma2 * v);
        for i in 0..p {
            sigma[[i, i]] += tau2;
        }
        let (sigma_inv, ln_det) = if tau2 == 0.0 {
            (m_mat.mapv(|v| v / sigma2), p as f64 * sigma2.ln() - ln_det_m)
        } else {
            let chol_s = Chol::new(&sigma)
                .map_err(|_| Error::Numerical("CAR covariance not positive definite".into()))?;
            (chol_s.inv()?, chol_s.ln_det())
        };
        Ok(Box::new(CarPrepared {
            model: self,
            w,
            kappa,
            sigma2,
            tau2,
            m_mat,
            m_inv,
            sigma,
            sigma_inv,
            ln_det,
        }))
    }
}

struct CarPrepared<'a> {
    model: &'a CarModel,
    w: EdgeWeights,
    kappa: f64,
    sigma2: f64,
    tau2: f64,
    m_mat: Array2<f64>,
    m_inv: Array2<f64>,
    sigma: Array2<f64>,
    sigma_inv: Array2<f64>,
    ln_det: f64,
}

impl CarPrepared<'_> {
    /// Dense `dM/dc_j` for design column `j`, edge contributions weighted
    /// by `w_e X_ej`.
    fn dm_for_column(&self, j: usize) -> Array2<f64> {
        let p = self.model.graph.p();
        let mut dm = Array2::zeros((p, p));
        for (e, &(a, b)) in self.model.graph.edges().iter().enumerate() {
            let ce = self.w.values()[e] * self.model.design.matrix()[[e, j]];
            dm[[a, a]] += ce;
            dm[[b, b]] += ce;
            dm[[a, b]] -= self.kappa * ce;
            dm[[b, a]] -= self.kappa * ce;
        }
        dm
    }

    fn adjacency(&self) -> Array2<f64> {
        let p = self.model.graph.p();
        let mut wmat = Array2::zeros((p, p));
        for (e, &(a, b)) in self.model.graph.edges().iter().enumerate() {
            wmat[[a, b]] = self.w.values()[e];
            wmat[[b, a]] = self.w.values()[e];
        }
        wmat
    }
}

impl PreparedModel for CarPrepared<'_> {
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
        let model = self.model;
        let gt = self.m_inv.dot(gmat).dot(&self.m_inv) * self.sigma2;
        let edges = model.graph.edges();

        let mut score = Array1::zeros(model.params.len());
        let m = model.design.m();
        if m > 0 {
            let mut grad_w = Array1::zeros(model.graph.q());
            for (e, &(i, j)) in edges.iter().enumerate() {
                grad_w[e] = -(gt[[i, i]] + gt[[j, j]] - 2.0 * self.kappa * gt[[i, j]]);
            }
            let grad_c = model.design.matrix().t().dot(&(&grad_w * self.w.values()));
            for j in 0..m {
                score[j] = grad_c[j];
            }
        }
        for (idx, spec) in model.params.iter().enumerate() {
            match spec.block {
                ParamBlock::LogSigma2 => {
                    // tr(G sigma^2 M^-1) = tr(G~ M), a sparse dot
                    let mut acc = 0.0;
                    for i in 0..model.graph.p() {
                        acc += gt[[i, i]] * self.m_mat[[i, i]];
                    }
                    for (e, &(i, j)) in edges.iter().enumerate() {
                        acc -= 2.0 * self.kappa * self.w.values()[e] * gt[[i, j]];
                    }
                    score[idx] = acc;
                }
                ParamBlock::Kappa => {
                    let mut acc = 0.0;
                    for (e, &(i, j)) in edges.iter().enumerate() {
                        acc += 2.0 * self.w.values()[e] * gt[[i, j]];
                    }
                    score[idx] = acc * 0.5 * (1.0 - self.kappa * self.kappa);
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
        let model = self.model;
        let p = model.graph.p();
        // C = sigma^2 M^-1 = Sigma - tau^2 I
        let c = self.m_inv.mapv(|v| self.sigma2 * v);
        let mut out = Vec::with_capacity(model.params.len());
        for spec in &model.params {
            let ds = match spec.block {
                ParamBlock::Weight(j) => {
                    let dm = self.dm_for_column(j);
                    Some(c.dot(&dm).dot(&c).mapv(|v| -v / self.sigma2))
                }
                ParamBlock::Kappa => {
                    let wmat = self.adjacency();
                    let scale = 0.5 * (1.0 - self.kappa * self.kappa) / self.sigma2;
                    Some(c.dot(&wmat).dot(&c).mapv(|v| scale * v))
                }
                ParamBlock::LogSigma2 => Some(c.clone()),
                ParamBlock::LogTau2 => {
                    let mut ds = Array2::zeros((p, p));
                    for i in 0..p {
                        ds[[i, i]] = self.tau2;
                    }
                    Some(ds)
                }
                ParamBlock::Beta0 => None,
                ParamBlock::Range => {
                    return Err(Error::InvalidValue(
                        "CAR model has no range parameter".into(),
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
    use super::super::{fit_mle, log_likelihood, score_only, FitOptions};
    use super::*;
    use crate::covariance::{car_precision, sample_gaussian, CovarianceSpec};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn sigma_matches_covariance_module() {
        let g = Graph::lattice(3, 3).unwrap();
        let model = CarModel::new(
            g.clone(),
            WeightDesign::empty(g.q()),
            Sigma2Mode::Free,
            false,
            false,
        )
        .unwrap();
        let kappa = 0.6f64;
        let sigma2 = 2.0f64;
        let theta = array![sigma2.ln(), Transform::TanhHalf.from_natural(kappa)];
        let prepared = model.prepare(&theta.view()).unwrap();
        let direct = car_precision(
            &g,
            &EdgeWeights::uniform(g.q(), 1.0).unwrap(),
            &CovarianceSpec::car(sigma2, kappa),
        )
        .unwrap()
        .dense_sigma()
        .unwrap();
        let sigma = prepared.sigma().unwrap();
        for i in 0..g.p() {
            for j in 0..g.p() {
                assert_abs_diff_eq!(sigma[[i, j]], direct[[i, j]], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn score_matches_finite_differences() {
        let g = Graph::lattice(2, 3).unwrap();
        let basis = crate::basis::lgl_eigenbasis(&g, 2).unwrap();
        let design = WeightDesign::from_model_parts(&basis, None, true).unwrap();
        let model =
            CarModel::new(g.clone(), design, Sigma2Mode::Free, true, true).unwrap();
        let spec = CovarianceSpec::car(1.0, 0.5).with_nugget(0.2).with_mean(0.3);
        let real = car_precision(&g, &EdgeWeights::uniform(g.q(), 1.0).unwrap(), &spec).unwrap();
        let y = sample_gaussian(&real, 3, 8).unwrap();
        // params: eta2, sigma2, kappa, tau2, beta0
        let theta = array![0.2, 0.1, 0.8, -1.1, 0.25];
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
            let scale = score[i].abs().max(fd.abs()).max(1.0);
            assert!(
                (score[i] - fd).abs() / scale < 1e-5,
                "param {i}: analytic {} fd {fd}",
                score[i]
            );
        }
    }

    #[test]
    fn score_matches_finite_differences_no_nugget() {
        let g = Graph::build(4, &[(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        let model = CarModel::new(
            g.clone(),
            WeightDesign::identity(g.q()),
            Sigma2Mode::Free,
            false,
            false,
        )
        .unwrap();
        let spec = CovarianceSpec::car(1.0, 0.4);
        let real = car_precision(&g, &EdgeWeights::uniform(g.q(), 1.0).unwrap(), &spec).unwrap();
        let y = sample_gaussian(&real, 5, 12).unwrap();
        let theta = array![0.1, -0.2, 0.3, 0.0, 0.4, 0.9];
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
    fn weight_scale_absorbed_by_sigma2() {
        // w -> c w with sigma^2 -> c sigma^2 leaves the likelihood
        // unchanged; on log scales this is a constant shift of both.
        let g = Graph::lattice(3, 3).unwrap();
        let model = CarModel::new(
            g.clone(),
            WeightDesign::identity(g.q()),
            Sigma2Mode::Free,
            false,
            false,
        )
        .unwrap();
        let spec = CovarianceSpec::car(1.0, 0.7);
        let real = car_precision(&g, &EdgeWeights::uniform(g.q(), 1.0).unwrap(), &spec).unwrap();
        let y = sample_gaussian(&real, 2, 31).unwrap();
        let mut rng = crate::seed::rng(7);
        use rand::Rng;
        let mut theta = Array1::zeros(model.dim());
        for v in theta.iter_mut() {
            *v = rng.random_range(-0.4..0.4);
        }
        let l0 = log_likelihood(&model, &theta.view(), &y.view()).unwrap();
        let shift = 0.9;
        let mut shifted = theta.clone();
        for j in 0..g.q() {
            shifted[j] += shift;
        }
        let is = model.find_block(ParamBlock::LogSigma2).unwrap();
        shifted[is] += shift;
        let l1 = log_likelihood(&model, &shifted.view(), &y.view()).unwrap();
        assert_abs_diff_eq!(l0, l1, epsilon = 1e-8);
    }

    #[test]
    fn fit_recovers_kappa_and_sigma2() {
        let g = Graph::lattice(4, 4).unwrap();
        let kappa_true = 0.7;
        let sigma2_true = 1.5;
        let spec = CovarianceSpec::car(sigma2_true, kappa_true);
        let real = car_precision(&g, &EdgeWeights::uniform(g.q(), 1.0).unwrap(), &spec).unwrap();
        let y = sample_gaussian(&real, 300, 77).unwrap();
        let model = CarModel::new(
            g.clone(),
            WeightDesign::empty(g.q()),
            Sigma2Mode::Free,
            false,
            false,
        )
        .unwrap();
        let theta0 = array![0.0, 0.0];
        let fit = fit_mle(&model, &y.view(), &theta0.view(), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let sigma2_hat = fit.estimate("sigma2").unwrap();
        let kappa_hat = fit.estimate("kappa").unwrap();
        assert!((sigma2_hat - sigma2_true).abs() < 0.25, "sigma2 {sigma2_hat}");
        assert!((kappa_hat - kappa_true).abs() < 0.15, "kappa {kappa_hat}");
    }
}
