//! Model-agnostic likelihood engine: evaluation, Fisher scoring, Wald
//! intervals, information criteria, basis size selection and conditional
//! smoothing.
//!
//! With independent replicates y_1..y_n (rows of `y`) and residual matrix
//! R = y - beta_0, the log-likelihood is
//!
//! ```text
//! l = -(1/2) (n p log 2 pi + n log|Sigma| + sum_i r_i' Sigma^-1 r_i)
//! ```
//!
//! and every score reduces to a contraction against the single symmetric
//! matrix `G = (1/2) (U U' - n Sigma^-1)` with `U = Sigma^-1 R'`:
//! `dl/d theta_a = tr(G dSigma/d theta_a)`. Each model supplies that
//! contraction in whatever factored form it has available; the engine never
//! needs the derivative matrices themselves except for the expected
//! information, where `I_ab = (n/2) tr(Sigma^-1 dSigma_a Sigma^-1 dSigma_b)`.
//!
//! The mean beta_0 is profiled out in closed form at every iteration:
//! `beta_0 = (1' Sigma^-1 ybar) / (1' Sigma^-1 1)`, so scoring only ever
//! moves covariance parameters through the information solve.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::basis::{lgl_eigenbasis, EdgeBasis};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::linalg::{self, trace_prod};

use super::gdef::{GdefModel, GdefSettings};
use super::{normal_quantile, CovarianceModel, ParamBlock, Transform, WeightDesign};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const COND_LIMIT: f64 = 1e12;
const MAX_LINE_SEARCH_FAILURES: usize = 5;
const THETA_SUP_LIMIT: f64 = 50.0;

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Initial scale gamma of the scoring step, in (0, 1].
    pub step_scale: f64,
    /// Convergence when the sup norm of the score drops below this.
    pub grad_tol: f64,
    /// Convergence when the relative log-likelihood change drops below this.
    pub rel_tol: f64,
    /// Step halvings attempted per iteration before the step counts as
    /// failed.
    pub max_halvings: usize,
    /// Compute the observed information at the estimate (central finite
    /// differences of the analytic score) and use it for standard errors;
    /// otherwise fall back to the expected information.
    pub observed_hessian: bool,
    /// Record per-iteration progress in [`FitResult::trace`].
    pub trace: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 100,
            step_scale: 1.0,
            grad_tol: 1e-6,
            rel_tol: 1e-10,
            max_halvings: 20,
            observed_hessian: true,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct IterRecord {
    pub iter: usize,
    pub loglik: f64,
    pub grad_norm: f64,
    pub step_scale: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub param_names: Vec<String>,
    pub transforms: Vec<Transform>,
    /// Estimate on the transformed (unconstrained) scale.
    pub theta: Array1<f64>,
    /// Estimate on the natural scale, same order as `param_names`.
    pub natural: Array1<f64>,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub diverged: bool,
    pub iterations: usize,
    /// Standard errors on the transformed scale, from the observed
    /// information when computed (NaN when that matrix is not positive
    /// definite), otherwise from the expected information.
    pub se: Array1<f64>,
    /// Expected information at the estimate, transformed scale.
    pub info: Array2<f64>,
    /// Observed information (minus the Hessian) at the estimate.
    pub observed_info: Option<Array2<f64>>,
    pub trace: Vec<IterRecord>,
}

impl FitResult {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.natural[i])
    }
}

struct Evaluated {
    loglik: f64,
    /// sum_i r_i' Sigma^-1 r_i at the evaluated theta.
    quad: f64,
    score: Option<Array1<f64>>,
    info: Option<Array2<f64>>,
}

/// Elementwise inner product of a (possibly transposed) view with an array.
fn dot_all(a: &ArrayView2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn evaluate(
    model: &dyn CovarianceModel,
    theta: &mut Array1<f64>,
    y: &ArrayView2<f64>,
    want_score: bool,
    want_info: bool,
    profile_beta0: bool,
) -> Result<Evaluated> {
    let p = model.p();
    if y.ncols() != p {
        return Err(Error::dim("observation columns", p, y.ncols()));
    }
    let n = y.nrows();
    if n == 0 {
        return Err(Error::InvalidValue("no replicates".into()));
    }
    let prepared = model.prepare(&theta.view())?;
    let sigma_inv = prepared.sigma_inv();

    if profile_beta0 {
        if let Some(ib) = model.find_block(ParamBlock::Beta0) {
            let ybar = y.mean_axis(Axis(0)).expect("n > 0");
            let v = sigma_inv.dot(&ybar);
            let denom = sigma_inv.sum();
            if denom <= 0.0 {
                return Err(Error::Numerical(
                    "profiled mean undefined: 1' Sigma^-1 1 not positive".into(),
                ));
            }
            theta[ib] = v.sum() / denom;
        }
    }
    let beta0 = model.beta0_of(&theta.view());
    let r = y.mapv(|v| v - beta0);
    let u = sigma_inv.dot(&r.t());
    let quad = dot_all(&r.t(), &u);
    let nf = n as f64;
    let loglik = -0.5 * (nf * p as f64 * LN_2PI + nf * prepared.ln_det_sigma() + quad);
    if !loglik.is_finite() {
        return Err(Error::Numerical("non-finite log-likelihood".into()));
    }

    let mut score = None;
    let mut info = None;
    if want_score {
        let mut gmat = u.dot(&u.t());
        gmat.zip_mut_with(sigma_inv, |g, &si| *g = 0.5 * (*g - nf * si));
        let mut s = prepared.score_from_g(&gmat)?;
        if let Some(ib) = model.find_block(ParamBlock::Beta0) {
            s[ib] = u.sum();
        }
        score = Some(s);
    }
    if want_info {
        let ds = prepared.dsigma_all()?;
        let ua: Vec<Option<Array2<f64>>> =
            ds.iter().map(|d| d.as_ref().map(|m| sigma_inv.dot(m))).collect();
        let d = model.dim();
        let mut im = Array2::zeros((d, d));
        for a in 0..d {
            if let Some(ua_a) = &ua[a] {
                for b in a..d {
                    if let Some(ua_b) = &ua[b] {
                        let val = 0.5 * nf * trace_prod(&ua_a.view(), &ua_b.view());
                        im[[a, b]] = val;
                        im[[b, a]] = val;
                    }
                }
            }
        }
        if let Some(ib) = model.find_block(ParamBlock::Beta0) {
            im[[ib, ib]] = nf * sigma_inv.sum();
        }
        info = Some(im);
    }
    Ok(Evaluated {
        loglik,
        quad,
        score,
        info,
    })
}

/// Log-likelihood, score and residual quadratic form in one evaluation;
/// the sampler's conjugate sigma^2 update needs the quadratic form.
pub(super) fn score_quad(
    model: &dyn CovarianceModel,
    theta: &ArrayView1<f64>,
    y: &ArrayView2<f64>,
) -> Result<(f64, Array1<f64>, f64)> {
    let mut t = theta.to_owned();
    let ev = evaluate(model, &mut t, y, true, false, false)?;
    Ok((ev.loglik, ev.score.expect("requested"), ev.quad))
}

/// Log-likelihood of `theta` (transformed scale) given replicate rows `y`.
pub fn log_likelihood(
    model: &dyn CovarianceModel,
    theta: &ArrayView1<f64>,
    y: &ArrayView2<f64>,
) -> Result<f64> {
    let mut t = theta.to_owned();
    Ok(evaluate(model, &mut t, y, false, false, false)?.loglik)
}

/// Log-likelihood and analytic score at `theta`.
pub fn score_only(
    model: &dyn CovarianceModel,
    theta: &ArrayView1<f64>,
    y: &ArrayView2<f64>,
) -> Result<(f64, Array1<f64>)> {
    let mut t = theta.to_owned();
    let ev = evaluate(model, &mut t, y, true, false, false)?;
    Ok((ev.loglik, ev.score.expect("requested")))
}

/// Log-likelihood, score and expected information at `theta`.
pub fn score_and_information(
    model: &dyn CovarianceModel,
    theta: &ArrayView1<f64>,
    y: &ArrayView2<f64>,
) -> Result<(f64, Array1<f64>, Array2<f64>)> {
    let mut t = theta.to_owned();
    let ev = evaluate(model, &mut t, y, true, true, false)?;
    Ok((ev.loglik, ev.score.expect("requested"), ev.info.expect("requested")))
}

fn spd_eigh_checked(a: &Array2<f64>, context: &str) -> Result<(Array1<f64>, Array2<f64>)> {
    let (vals, vecs) = linalg::eigh(a)?;
    let vmax = vals[vals.len() - 1];
    let vmin = vals[0];
    if !(vmin > 0.0) || vmax / vmin > COND_LIMIT {
        let cond = if vmin > 0.0 { vmax / vmin } else { f64::INFINITY };
        return Err(Error::Numerical(format!(
            "{context} ill-conditioned (condition number {cond:.3e})"
        )));
    }
    Ok((vals, vecs))
}

fn spd_solve(a: &Array2<f64>, b: &Array1<f64>, context: &str) -> Result<Array1<f64>> {
    let (vals, vecs) = spd_eigh_checked(a, context)?;
    let proj = vecs.t().dot(b);
    Ok(vecs.dot(&(&proj / &vals)))
}

fn inverse_diag(a: &Array2<f64>) -> Result<Array1<f64>> {
    let (vals, vecs) = spd_eigh_checked(a, "information matrix")?;
    let d = a.nrows();
    let mut out = Array1::zeros(d);
    for j in 0..d {
        let mut acc = 0.0;
        for k in 0..d {
            acc += vecs[[j, k]] * vecs[[j, k]] / vals[k];
        }
        out[j] = acc;
    }
    Ok(out)
}

fn sup_norm_excluding_beta0(model: &dyn CovarianceModel, theta: &Array1<f64>) -> f64 {
    model
        .params()
        .iter()
        .zip(theta.iter())
        .filter(|(p, _)| p.block != ParamBlock::Beta0)
        .map(|(_, v)| v.abs())
        .fold(0.0, f64::max)
}

/// Central finite differences of the analytic score; returns the observed
/// information `-(H + H') / 2`.
fn observed_information(
    model: &dyn CovarianceModel,
    theta: &Array1<f64>,
    y: &ArrayView2<f64>,
) -> Result<Array2<f64>> {
    let d = model.dim();
    let h = 1e-5;
    let mut hess = Array2::zeros((d, d));
    for i in 0..d {
        let mut tp = theta.clone();
        tp[i] += h;
        let mut tm = theta.clone();
        tm[i] -= h;
        let sp = evaluate(model, &mut tp, y, true, false, false)?.score.expect("requested");
        let sm = evaluate(model, &mut tm, y, true, false, false)?.score.expect("requested");
        let col = (&sp - &sm) / (2.0 * h);
        hess.row_mut(i).assign(&col);
    }
    let mut obs = Array2::zeros((d, d));
    for i in 0..d {
        for j in 0..d {
            obs[[i, j]] = -0.5 * (hess[[i, j]] + hess[[j, i]]);
        }
    }
    Ok(obs)
}

/// `(AIC, BIC)` from a maximized log-likelihood, parameter count and total
/// observation count (replicates times nodes).
pub fn information_criteria(loglik: f64, n_params: usize, n_obs: usize) -> (f64, f64) {
    let aic = -2.0 * loglik + 2.0 * n_params as f64;
    let bic = -2.0 * loglik + n_params as f64 * (n_obs as f64).ln();
    (aic, bic)
}

/// Maximum likelihood by Fisher scoring with step halving.
///
/// Divergence rather than error: the result carries `diverged = true` when
/// the iterate leaves a large box or the line search stalls repeatedly.
/// An ill-conditioned information matrix is an error, as no step direction
/// is defined.
pub fn fit_mle(
    model: &dyn CovarianceModel,
    y: &ArrayView2<f64>,
    theta0: &ArrayView1<f64>,
    opts: &FitOptions,
) -> Result<FitResult> {
    if theta0.len() != model.dim() {
        return Err(Error::dim("theta0", model.dim(), theta0.len()));
    }
    if !(opts.step_scale > 0.0 && opts.step_scale <= 1.0) {
        return Err(Error::InvalidValue(format!(
            "step scale must be in (0,1], got {}",
            opts.step_scale
        )));
    }
    let mut theta = theta0.to_owned();
    let mut ev = evaluate(model, &mut theta, y, true, true, true)?;
    let mut converged = false;
    let mut diverged = false;
    let mut iterations = 0;
    let mut consec_failures = 0;
    let mut trace = Vec::new();

    for it in 1..=opts.max_iter {
        let score = ev.score.as_ref().expect("requested");
        let grad_norm = score.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if grad_norm < opts.grad_tol {
            converged = true;
            break;
        }
        let step = spd_solve(ev.info.as_ref().expect("requested"), score, "information matrix")?;

        let mut gamma = opts.step_scale;
        let mut improved = None;
        let mut fallback = None;
        for _ in 0..=opts.max_halvings {
            let mut trial = &theta + &step.mapv(|v| gamma * v);
            match evaluate(model, &mut trial, y, false, false, true) {
                Ok(e) if e.loglik > ev.loglik => {
                    improved = Some((trial, gamma));
                    break;
                }
                Ok(_) => {
                    fallback = Some((trial, gamma));
                    gamma *= 0.5;
                }
                Err(e) if e.is_numerical() => {
                    gamma *= 0.5;
                }
                Err(e) => return Err(e),
            }
        }
        iterations = it;
        let step_improved = improved.is_some();
        let step_scale = match improved.or(fallback) {
            Some((trial, g)) => {
                theta = trial;
                g
            }
            None => 0.0,
        };
        consec_failures = if step_improved { 0 } else { consec_failures + 1 };

        let prev_loglik = ev.loglik;
        ev = evaluate(model, &mut theta, y, true, true, true)?;
        if opts.trace {
            let gn = ev
                .score
                .as_ref()
                .expect("requested")
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            trace.push(IterRecord {
                iter: it,
                loglik: ev.loglik,
                grad_norm: gn,
                step_scale,
            });
        }
        if sup_norm_excluding_beta0(model, &theta) > THETA_SUP_LIMIT
            || consec_failures >= MAX_LINE_SEARCH_FAILURES
        {
            diverged = true;
            break;
        }
        if step_improved && (ev.loglik - prev_loglik).abs() < opts.rel_tol * (prev_loglik.abs() + 1.0)
        {
            converged = true;
            break;
        }
    }

    let info = ev.info.take().expect("requested");
    let observed_info = if opts.observed_hessian && !diverged {
        observed_information(model, &theta, y).ok()
    } else {
        None
    };
    let se = if opts.observed_hessian {
        observed_info
            .as_ref()
            .and_then(|o| inverse_diag(o).ok())
            .map_or_else(
                || Array1::from_elem(model.dim(), f64::NAN),
                |d| d.mapv(f64::sqrt),
            )
    } else {
        inverse_diag(&info)
            .map(|d| d.mapv(f64::sqrt))
            .unwrap_or_else(|_| Array1::from_elem(model.dim(), f64::NAN))
    };

    let n_obs = y.nrows() * model.p();
    let (aic, bic) = information_criteria(ev.loglik, model.dim(), n_obs);
    Ok(FitResult {
        param_names: model.param_names(),
        transforms: model.params().iter().map(|p| p.transform).collect(),
        natural: model.to_natural(&theta.view()),
        theta,
        loglik: ev.loglik,
        aic,
        bic,
        converged: converged && !diverged,
        diverged,
        iterations,
        se,
        info,
        observed_info,
        trace,
    })
}

/// A generic starting point: zero weight coefficients, moment-based
/// variance split, mid-range kappa, sample mean.
pub fn default_start(model: &dyn CovarianceModel, y: &ArrayView2<f64>) -> Array1<f64> {
    let mean = y.mean().unwrap_or(0.0);
    let var = y
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / y.len().max(1) as f64;
    let var = var.max(1e-8);
    let has_nugget = model.find_block(ParamBlock::LogTau2).is_some();
    let mut theta = Array1::zeros(model.dim());
    for (i, spec) in model.params().iter().enumerate() {
        theta[i] = match spec.block {
            ParamBlock::Weight(_) => 0.0,
            ParamBlock::LogSigma2 => {
                if has_nugget {
                    (0.8 * var).ln()
                } else {
                    var.ln()
                }
            }
            ParamBlock::Kappa => Transform::TanhHalf.from_natural(0.5),
            ParamBlock::Range => 0.0,
            ParamBlock::LogTau2 => (0.2 * var).ln(),
            ParamBlock::Beta0 => mean,
        };
    }
    theta
}

#[derive(Debug, Clone)]
pub struct WaldInterval {
    pub name: String,
    /// Natural-scale point estimate.
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl WaldInterval {
    pub fn covers(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Wald intervals built on the transformed scale and mapped through the
/// monotone reparameterization, so variance intervals stay positive and
/// kappa intervals stay inside (-1, 1). Withheld when standard errors are
/// unavailable (information matrix not positive definite at the estimate).
pub fn wald_intervals(fit: &FitResult, level: f64) -> Result<Vec<WaldInterval>> {
    if !(0.0 <= level && level < 1.0) {
        return Err(Error::InvalidValue(format!(
            "confidence level must be in [0,1), got {level}"
        )));
    }
    if fit.se.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical(
            "intervals withheld: information matrix not positive definite at the estimate"
                .into(),
        ));
    }
    let z = if level == 0.0 {
        0.0
    } else {
        normal_quantile(0.5 * (1.0 + level))
    };
    let mut out = Vec::with_capacity(fit.theta.len());
    for i in 0..fit.theta.len() {
        let tr = fit.transforms[i];
        let half = z * fit.se[i];
        out.push(WaldInterval {
            name: fit.param_names[i].clone(),
            estimate: fit.natural[i],
            lower: tr.to_natural(fit.theta[i] - half),
            upper: tr.to_natural(fit.theta[i] + half),
            level,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct SelectionRow {
    pub k: usize,
    pub n_params: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub diverged: bool,
}

#[derive(Debug)]
pub struct SelectionTable {
    pub rows: Vec<SelectionRow>,
    /// Basis size minimizing AIC / BIC over usable rows.
    pub chosen_aic: Option<usize>,
    pub chosen_bic: Option<usize>,
    /// Fit for each row; `None` when the fit errored out.
    pub fits: Vec<Option<FitResult>>,
}

/// Fit a GDEF model for each basis size in `k_grid` and tabulate
/// information criteria. Fits are warm-started from the previous size by
/// parameter name, which the nested eigenbasis makes meaningful. A fit that
/// diverges or errors is recorded and skipped for selection, not fatal.
pub fn select_basis_size(
    graph: &Graph,
    y: &ArrayView2<f64>,
    k_grid: &[usize],
    settings: &GdefSettings,
    opts: &FitOptions,
) -> Result<SelectionTable> {
    if k_grid.is_empty() {
        return Err(Error::InvalidValue("empty basis size grid".into()));
    }
    let kmax = *k_grid.iter().max().expect("non-empty");
    let full = lgl_eigenbasis(graph, kmax)?;
    let mut rows = Vec::with_capacity(k_grid.len());
    let mut fits: Vec<Option<FitResult>> = Vec::with_capacity(k_grid.len());
    let mut warm: Option<(Vec<String>, Array1<f64>)> = None;

    for &k in k_grid {
        let basis = EdgeBasis::from_parts(
            full.vectors().slice(s![.., ..k]).to_owned(),
            full.eigenvalues()[..k].to_vec(),
            false,
        )?;
        let design = WeightDesign::from_model_parts(&basis, None, settings.fix_intercept)?;
        let model = GdefModel::new(
            graph.clone(),
            design,
            settings.nu,
            settings.sigma2,
            settings.nugget,
            settings.estimate_mean,
        )?;
        let mut theta0 = default_start(&model, y);
        if let Some((names, values)) = &warm {
            for (i, name) in model.param_names().iter().enumerate() {
                if let Some(j) = names.iter().position(|n| n == name) {
                    theta0[i] = values[j];
                }
            }
        }
        match fit_mle(&model, y, &theta0.view(), opts) {
            Ok(fit) => {
                rows.push(SelectionRow {
                    k,
                    n_params: model.dim(),
                    loglik: fit.loglik,
                    aic: fit.aic,
                    bic: fit.bic,
                    converged: fit.converged,
                    diverged: fit.diverged,
                });
                if !fit.diverged {
                    warm = Some((fit.param_names.clone(), fit.theta.clone()));
                }
                fits.push(Some(fit));
            }
            Err(e) if e.is_numerical() => {
                rows.push(SelectionRow {
                    k,
                    n_params: 0,
                    loglik: f64::NAN,
                    aic: f64::NAN,
                    bic: f64::NAN,
                    converged: false,
                    diverged: true,
                });
                fits.push(None);
            }
            Err(e) => return Err(e),
        }
    }

    let usable = |r: &&SelectionRow| !r.diverged && r.aic.is_finite();
    let chosen_aic = rows
        .iter()
        .filter(usable)
        .min_by(|a, b| a.aic.total_cmp(&b.aic))
        .map(|r| r.k);
    let chosen_bic = rows
        .iter()
        .filter(usable)
        .min_by(|a, b| a.bic.total_cmp(&b.bic))
        .map(|r| r.k);
    Ok(SelectionTable {
        rows,
        chosen_aic,
        chosen_bic,
        fits,
    })
}

#[derive(Debug, Clone)]
pub struct Smoothed {
    /// Conditional mean of the latent spatial field, one row per replicate
    /// (add beta_0 back for a fitted response surface).
    pub mean: Array2<f64>,
    /// Conditional covariance of the field given the data.
    pub cov: Array2<f64>,
    /// Diagonal of `cov`, clamped at zero.
    pub var: Array1<f64>,
    /// `y - beta_0 - z_hat`, the part attributed to the nugget.
    pub residuals: Array2<f64>,
}

/// Conditional distribution of the latent spatial field given the data:
/// `z_hat = Sigma_sp Sigma^-1 (y - beta_0)` and
/// `cov = Sigma_sp - Sigma_sp Sigma^-1 Sigma_sp` with
/// `Sigma_sp = Sigma - tau^2 I`; algebraically identical to the
/// precision-form `(Sigma_sp^-1 + I/tau^2)^-1` expressions but defined at
/// `tau^2 = 0`, where the field interpolates the centered data exactly.
pub fn smooth_field(
    model: &dyn CovarianceModel,
    theta: &ArrayView1<f64>,
    y: &ArrayView2<f64>,
) -> Result<Smoothed> {
    let p = model.p();
    if y.ncols() != p {
        return Err(Error::dim("observation columns", p, y.ncols()));
    }
    let prepared = model.prepare(theta)?;
    let tau2 = model
        .find_block(ParamBlock::LogTau2)
        .map_or(0.0, |i| theta[i].exp());
    let beta0 = model.beta0_of(theta);

    let mut sigma_sp = prepared.sigma()?;
    for i in 0..p {
        sigma_sp[[i, i]] -= tau2;
    }
    let r = y.mapv(|v| v - beta0);
    let u = prepared.sigma_inv().dot(&r.t());
    let mean = sigma_sp.dot(&u).t().to_owned();
    let residuals = &r - &mean;

    let t = prepared.sigma_inv().dot(&sigma_sp);
    let mut cov = &sigma_sp - &sigma_sp.dot(&t);
    linalg::symmetrize(&mut cov);
    let mut var = Array1::zeros(p);
    for j in 0..p {
        var[j] = cov[[j, j]].max(0.0);
    }
    Ok(Smoothed {
        mean,
        cov,
        var,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::{sample_gaussian, CovarianceSpec, Smoothness};
    use crate::graph::EdgeWeights;
    use crate::inference::Sigma2Mode;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn toy_model(nugget: bool, mean: bool) -> (Graph, GdefModel) {
        let g = Graph::lattice(2, 3).unwrap();
        let basis = lgl_eigenbasis(&g, 3).unwrap();
        let design = WeightDesign::from_model_parts(&basis, None, false).unwrap();
        let m = GdefModel::new(
            g.clone(),
            design,
            Smoothness::ThreeHalves,
            Sigma2Mode::Free,
            nugget,
            mean,
        )
        .unwrap();
        (g, m)
    }

    fn toy_data(g: &Graph, n: usize, seed: u64) -> Array2<f64> {
        let w = EdgeWeights::uniform(g.q(), 1.0).unwrap();
        let spec = CovarianceSpec::gdef(Smoothness::ThreeHalves, 1.0)
            .with_nugget(0.3)
            .with_mean(0.7);
        let real = crate::covariance::gdef_covariance(g, &w, &spec).unwrap();
        sample_gaussian(&real, n, seed).unwrap()
    }

    #[test]
    fn loglik_matches_direct_formula() {
        let (g, model) = toy_model(true, true);
        let y = toy_data(&g, 3, 5);
        let theta = array![0.2, -0.1, 0.3, 0.1, -1.0, 0.5];
        let l = log_likelihood(&model, &theta.view(), &y.view()).unwrap();

        // independent evaluation through the eigendecomposition
        let prepared = model.prepare(&theta.view()).unwrap();
        let sigma = prepared.sigma().unwrap();
        let (vals, vecs) = linalg::eigh(&sigma).unwrap();
        let ln_det: f64 = vals.iter().map(|v| v.ln()).sum();
        let mut quad = 0.0;
        for row in y.rows() {
            let r = row.mapv(|v| v - 0.5);
            let proj = vecs.t().dot(&r);
            quad += proj.iter().zip(vals.iter()).map(|(c, v)| c * c / v).sum::<f64>();
        }
        let p = g.p() as f64;
        let direct = -0.5 * (3.0 * p * LN_2PI + 3.0 * ln_det + quad);
        assert_abs_diff_eq!(l, direct, epsilon = 1e-8);
    }

    #[test]
    fn score_matches_finite_differences() {
        let (g, model) = toy_model(true, true);
        let y = toy_data(&g, 2, 11);
        let theta = array![0.15, -0.2, 0.1, 0.2, -0.8, 0.6];
        let (_, score) = score_only(&model, &theta.view(), &y.view()).unwrap();
        let h = 1e-5;
        for i in 0..theta.len() {
            let mut tp = theta.clone();
            tp[i] += h;
            let mut tm = theta.clone();
            tm[i] -= h;
            let fp = log_likelihood(&model, &tp.view(), &y.view()).unwrap();
            let fm = log_likelihood(&model, &tm.view(), &y.view()).unwrap();
            let fd = (fp - fm) / (2.0 * h);
            let scale = score[i].abs().max(fd.abs()).max(1.0);
            assert!(
                (score[i] - fd).abs() / scale < 1e-5,
                "param {i}: analytic {} fd {fd}",
                score[i]
            );
        }
    }

    #[test]
    fn score_matches_finite_differences_fixed_sigma_no_extras() {
        let g = Graph::lattice(2, 3).unwrap();
        let basis = lgl_eigenbasis(&g, 2).unwrap();
        let design = WeightDesign::from_model_parts(&basis, None, false).unwrap();
        let model = GdefModel::new(
            g.clone(),
            design,
            Smoothness::Infinity,
            Sigma2Mode::Fixed(1.0),
            false,
            false,
        )
        .unwrap();
        let y = toy_data(&g, 4, 3);
        let theta = array![0.3, -0.4];
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
            assert!((score[i] - fd).abs() < 1e-4 * score[i].abs().max(1.0));
        }
    }

    #[test]
    fn information_is_symmetric_positive_definite() {
        let (g, model) = toy_model(true, true);
        let y = toy_data(&g, 2, 7);
        let theta = array![0.1, 0.05, -0.1, 0.0, -1.2, 0.4];
        let (_, _, info) = score_and_information(&model, &theta.view(), &y.view()).unwrap();
        for i in 0..info.nrows() {
            for j in 0..info.ncols() {
                assert_abs_diff_eq!(info[[i, j]], info[[j, i]], epsilon = 1e-8);
            }
        }
        let (vals, _) = linalg::eigh(&info).unwrap();
        assert!(vals[0] > 0.0, "smallest eigenvalue {}", vals[0]);
    }

    #[test]
    fn information_criteria_arithmetic() {
        let (aic, bic) = information_criteria(-100.0, 10, 1000);
        assert_abs_diff_eq!(aic, 220.0, epsilon = 1e-12);
        assert_abs_diff_eq!(bic, 200.0 + 10.0 * 1000.0f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(bic, 269.0775527898, epsilon = 1e-9);
    }

    #[test]
    fn fit_recovers_parameters_with_many_replicates() {
        let g = Graph::lattice(3, 4).unwrap();
        let basis = lgl_eigenbasis(&g, 2).unwrap();
        let design = WeightDesign::from_model_parts(&basis, None, false).unwrap();
        let eta_true = array![0.4, 1.1];
        let w = design.weights(&eta_true.view()).unwrap();
        let spec = CovarianceSpec::gdef(Smoothness::ThreeHalves, 1.0);
        let real = crate::covariance::gdef_covariance(&g, &w, &spec).unwrap();
        let y = sample_gaussian(&real, 400, 99).unwrap();

        let model = GdefModel::new(
            g,
            design,
            Smoothness::ThreeHalves,
            Sigma2Mode::Fixed(1.0),
            false,
            false,
        )
        .unwrap();
        let theta0 = Array1::zeros(2);
        let fit = fit_mle(&model, &y.view(), &theta0.view(), &FitOptions::default()).unwrap();
        assert!(fit.converged, "iterations {}", fit.iterations);
        assert!(!fit.diverged);
        assert!((fit.theta[0] - eta_true[0]).abs() < 0.2, "eta1 {}", fit.theta[0]);
        assert!((fit.theta[1] - eta_true[1]).abs() < 0.2, "eta2 {}", fit.theta[1]);
        // score approximately zero at the reported maximum
        let (_, s) = score_only(&model, &fit.theta.view(), &y.view()).unwrap();
        assert!(s.iter().all(|v| v.abs() < 1e-4));
    }

    #[test]
    fn fit_profiles_mean_to_stationarity() {
        // fixed intercept keeps the weight scale out of the model, so the
        // free sigma^2 / tau^2 / beta0 fit is well conditioned
        let g = Graph::lattice(3, 4).unwrap();
        let basis = lgl_eigenbasis(&g, 2).unwrap();
        let design = WeightDesign::from_model_parts(&basis, None, true).unwrap();
        let model = GdefModel::new(
            g.clone(),
            design,
            Smoothness::ThreeHalves,
            Sigma2Mode::Free,
            true,
            true,
        )
        .unwrap();
        let y = toy_data(&g, 30, 13);
        let theta0 = default_start(&model, &y.view());
        let fit = fit_mle(&model, &y.view(), &theta0.view(), &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let ib = model.find_block(ParamBlock::Beta0).unwrap();
        let (_, s) = score_only(&model, &fit.theta.view(), &y.view()).unwrap();
        assert!(s[ib].abs() < 1e-6, "beta0 score {}", s[ib]);
    }

    #[test]
    fn duplicate_design_columns_are_ill_conditioned() {
        let g = Graph::lattice(2, 3).unwrap();
        let basis = lgl_eigenbasis(&g, 2).unwrap();
        let mut mat = Array2::zeros((g.q(), 2));
        mat.column_mut(0).assign(&basis.vectors().column(1));
        mat.column_mut(1).assign(&basis.vectors().column(1));
        let design = WeightDesign::new(mat, vec!["a".into(), "b".into()]).unwrap();
        let model = GdefModel::new(
            g.clone(),
            design,
            Smoothness::Half,
            Sigma2Mode::Fixed(1.0),
            false,
            false,
        )
        .unwrap();
        let y = toy_data(&g, 2, 17);
        let err = fit_mle(&model, &y.view(), &Array1::zeros(2).view(), &FitOptions::default())
            .unwrap_err();
        assert!(err.is_numerical());
        assert!(err.to_string().contains("condition number"), "{err}");
    }

    #[test]
    fn wald_intervals_map_monotonically() {
        let fit = FitResult {
            param_names: vec!["eta1".into(), "sigma2".into()],
            transforms: vec![Transform::Identity, Transform::Log],
            theta: array![1.0, 0.0],
            natural: array![1.0, 1.0],
            loglik: 0.0,
            aic: 0.0,
            bic: 0.0,
            converged: true,
            diverged: false,
            iterations: 1,
            se: array![0.5, 0.4],
            info: Array2::eye(2),
            observed_info: None,
            trace: vec![],
        };
        let iv = wald_intervals(&fit, 0.95).unwrap();
        let z = 1.959963985;
        assert_abs_diff_eq!(iv[0].lower, 1.0 - z * 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(iv[0].upper, 1.0 + z * 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(iv[1].lower, (-z * 0.4f64).exp(), epsilon = 1e-6);
        assert_abs_diff_eq!(iv[1].upper, (z * 0.4f64).exp(), epsilon = 1e-6);
        assert!(iv[0].covers(1.0) && !iv[0].covers(5.0));
    }

    #[test]
    fn smooth_field_interpolates_without_nugget() {
        let (g, model) = toy_model(false, false);
        let y = toy_data(&g, 2, 23);
        let theta = array![0.1, -0.2, 0.3, 0.2];
        let sm = smooth_field(&model, &theta.view(), &y.view()).unwrap();
        for i in 0..y.nrows() {
            for j in 0..g.p() {
                assert_abs_diff_eq!(sm.mean[[i, j]], y[[i, j]], epsilon = 1e-8);
            }
        }
        assert!(sm.var.iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn smooth_field_matches_woodbury_form() {
        let (g, model) = toy_model(true, true);
        let y = toy_data(&g, 1, 29);
        let theta = array![0.2, -0.1, 0.1, 0.3, -0.9, 0.4];
        let sm = smooth_field(&model, &theta.view(), &y.view()).unwrap();

        let prepared = model.prepare(&theta.view()).unwrap();
        let tau2 = theta[4].exp();
        let mut sigma_sp = prepared.sigma().unwrap();
        for i in 0..g.p() {
            sigma_sp[[i, i]] -= tau2;
        }
        // (Sigma_sp^-1 + I / tau2)^-1 applied to r / tau2
        let (vals, vecs) = linalg::eigh(&sigma_sp).unwrap();
        let sp_inv = {
            let mut m = Array2::zeros((g.p(), g.p()));
            for k in 0..g.p() {
                let vk = vecs.column(k);
                for a in 0..g.p() {
                    for b in 0..g.p() {
                        m[[a, b]] += vk[a] * vk[b] / vals[k];
                    }
                }
            }
            m
        };
        let mut prec = sp_inv;
        for i in 0..g.p() {
            prec[[i, i]] += 1.0 / tau2;
        }
        let r = y.row(0).mapv(|v| v - theta[5]);
        let rhs = r.mapv(|v| v / tau2);
        let (pv, pvec) = linalg::eigh(&prec).unwrap();
        let proj = pvec.t().dot(&rhs);
        let zhat = pvec.dot(&(&proj / &pv));
        for j in 0..g.p() {
            assert_abs_diff_eq!(sm.mean[[0, j]], zhat[j], epsilon = 1e-7);
        }
        // conditional variance equals diag of (Sigma_sp^-1 + I/tau2)^-1
        for j in 0..g.p() {
            let mut acc = 0.0;
            for k in 0..g.p() {
                acc += pvec[[j, k]] * pvec[[j, k]] / pv[k];
            }
            assert_abs_diff_eq!(sm.var[j], acc, epsilon = 1e-7);
        }
    }

    #[test]
    fn selection_table_prefers_truthful_size() {
        let g = Graph::lattice(3, 4).unwrap();
        let basis = lgl_eigenbasis(&g, 2).unwrap();
        let design = WeightDesign::from_model_parts(&basis, None, false).unwrap();
        let w = design.weights(&array![0.0, 1.2].view()).unwrap();
        let spec = CovarianceSpec::gdef(Smoothness::ThreeHalves, 1.0);
        let real = crate::covariance::gdef_covariance(&g, &w, &spec).unwrap();
        let y = sample_gaussian(&real, 150, 41).unwrap();
        let settings = GdefSettings {
            nu: Smoothness::ThreeHalves,
            sigma2: Sigma2Mode::Fixed(1.0),
            nugget: false,
            estimate_mean: false,
            fix_intercept: false,
        };
        let table = select_basis_size(
            &g,
            &y.view(),
            &[1, 2, 4],
            &settings,
            &FitOptions::default(),
        )
        .unwrap();
        assert_eq!(table.rows.len(), 3);
        // nested bases: maximized likelihood is non-decreasing in k
        assert!(table.rows[1].loglik >= table.rows[0].loglik - 1e-6);
        assert!(table.rows[2].loglik >= table.rows[1].loglik - 1e-6);
        let bic_k = table.chosen_bic.unwrap();
        assert!(bic_k >= 2, "BIC chose k = {bic_k}");
    }
}
