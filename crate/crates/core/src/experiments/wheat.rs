//! Wheat-yield analysis on a 20 x 25 lattice.
//!
//! The intercept basis function is replaced by separate within-row and
//! within-column edge indicators, so horizontal and vertical neighbor
//! correlations get their own baseline weight; the remaining k - 2 columns
//! are the non-constant line-graph eigenvectors. The GDEF model with
//! nu = 3/2, free sigma^2, a nugget and a scalar mean is fit by maximum
//! likelihood, the latent field is smoothed out of the single replicate,
//! and the leftover residuals are checked for spatial signal with Moran's I.

use std::collections::BTreeMap;
use std::time::Instant;

use ndarray::{concatenate, Array1, ArrayView2, Axis};

use super::{morans_i, ExperimentReport, ReplicateRecord};
use crate::basis::{lgl_eigenbasis, split_intercept_row_col};
use crate::covariance::Smoothness;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::inference::{
    default_start, fit_mle, smooth_field, wald_intervals, FitOptions, FitResult, GdefModel,
    Sigma2Mode, Smoothed, WaldInterval, WeightDesign,
};
use crate::seed;

pub const WHEAT_ROWS: usize = 20;
pub const WHEAT_COLS: usize = 25;
const BASIS_K: usize = 20;
const CI_LEVEL: f64 = 0.95;
const PERMUTATIONS: usize = 9999;

/// Everything the yield analysis produces: the fit and its intervals, the
/// estimated log weight per edge, the smoothed field with residuals, the
/// Moran's I check, and a report summarizing the headline numbers.
#[derive(Debug)]
pub struct WheatAnalysis {
    pub report: ExperimentReport,
    pub fit: FitResult,
    pub intervals: Vec<WaldInterval>,
    /// Fitted log edge weights, the plot field for the weight map.
    pub log_weights: Array1<f64>,
    pub smoothed: Smoothed,
    pub morans: (f64, f64),
}

/// Run the full yield analysis. `yields` must be the 20 x 25 grid, rows
/// north to south, flattened row-major onto the lattice.
pub fn wheat_pipeline(yields: &ArrayView2<f64>, seed_val: u64) -> Result<WheatAnalysis> {
    if yields.nrows() != WHEAT_ROWS || yields.ncols() != WHEAT_COLS {
        return Err(Error::InvalidValue(format!(
            "wheat grid must be {WHEAT_ROWS} x {WHEAT_COLS}, got {} x {}",
            yields.nrows(),
            yields.ncols()
        )));
    }
    lattice_yield_analysis(yields, BASIS_K, seed_val)
}

/// The analysis behind [`wheat_pipeline`] for any lattice of yields:
/// row/column intercept split, k-column weight design, GDEF nu = 3/2 fit
/// with nugget and mean, smoothing, Moran's I on the residuals.
pub fn lattice_yield_analysis(
    yields: &ArrayView2<f64>,
    k: usize,
    seed_val: u64,
) -> Result<WheatAnalysis> {
    let started = Instant::now();
    let (rows, cols) = (yields.nrows(), yields.ncols());
    if yields.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidValue("yield grid contains non-finite entries".into()));
    }
    let g = Graph::lattice(rows, cols)?;
    let p = g.p();
    let y = yields
        .to_owned()
        .into_shape_with_order((1, p))
        .expect("grid reshapes to one row");

    let model = yield_model(&g, k)?;
    let theta0 = default_start(&model, &y.view());
    // a single replicate leaves the expected information with a slow
    // direction near the optimum; allow extra scoring iterations
    let opts = FitOptions {
        max_iter: 300,
        ..FitOptions::default()
    };
    let fit = fit_mle(&model, &y.view(), &theta0.view(), &opts)?;
    if fit.diverged {
        return Err(Error::Numerical("yield fit diverged".into()));
    }
    let intervals = wald_intervals(&fit, CI_LEVEL)?;
    let log_weights = model
        .weights_of(&fit.theta.view())?
        .values()
        .mapv(f64::ln);
    let smoothed = smooth_field(&model, &fit.theta.view(), &y.view())?;
    let resid = smoothed.residuals.row(0).to_owned();
    let morans = morans_i(&resid.view(), &g, PERMUTATIONS, seed::derive(seed_val, 1))?;

    let mut metrics = BTreeMap::new();
    for name in ["eta1_row", "eta1_col", "sigma2", "tau2", "beta0"] {
        if let Some(v) = fit.estimate(name) {
            metrics.insert(name.to_string(), v);
        }
    }
    metrics.insert("loglik".into(), fit.loglik);
    metrics.insert("aic".into(), fit.aic);
    metrics.insert("bic".into(), fit.bic);
    metrics.insert("morans_i".into(), morans.0);
    metrics.insert("morans_p".into(), morans.1);
    let record = ReplicateRecord {
        index: 0,
        seed: seed_val,
        diverged: false,
        metrics,
    };
    let parameters = BTreeMap::from([
        ("rows".into(), rows.into()),
        ("cols".into(), cols.into()),
        ("k".into(), k.into()),
        ("nu".into(), "3/2".into()),
        ("ci_level".into(), CI_LEVEL.into()),
        ("permutations".into(), PERMUTATIONS.into()),
    ]);
    let report = ExperimentReport::assemble("wheat", parameters, seed_val, vec![record], started);

    Ok(WheatAnalysis {
        report,
        fit,
        intervals,
        log_weights,
        smoothed,
        morans,
    })
}

/// The wheat design at full size.
pub fn wheat_model(g: &Graph) -> Result<GdefModel> {
    yield_model(g, BASIS_K)
}

/// k-column weight design with the constant eigenvector split into
/// within-row and within-column indicators, followed by the k - 2 smallest
/// non-constant eigenvectors. Columns are named eta1_row, eta1_col,
/// eta2, ..., eta{k-1}.
pub fn rowcol_design(g: &Graph, k: usize) -> Result<WeightDesign> {
    if k < 3 {
        return Err(Error::InvalidValue(format!(
            "row/column design needs k >= 3 columns, got {k}"
        )));
    }
    let (row, col) = split_intercept_row_col(g)?;
    let basis = lgl_eigenbasis(g, k - 1)?;
    let q = g.q();
    let smooth = basis.vectors().slice(ndarray::s![.., 1..]).to_owned();
    let x = concatenate(
        Axis(1),
        &[
            row.view().insert_axis(Axis(1)),
            col.view().insert_axis(Axis(1)),
            smooth.view(),
        ],
    )
    .map_err(|_| Error::dim("design rows", q, row.len()))?;
    let mut names = vec!["eta1_row".to_string(), "eta1_col".to_string()];
    names.extend((2..k).map(|j| format!("eta{j}")));
    WeightDesign::new(x, names)
}

/// The yield model: row/column intercept split plus the k - 2 smallest
/// non-constant eigenvectors, GDEF nu = 3/2, free sigma^2, nugget, mean.
pub fn yield_model(g: &Graph, k: usize) -> Result<GdefModel> {
    let design = rowcol_design(g, k)?;
    GdefModel::new(
        g.clone(),
        design,
        Smoothness::ThreeHalves,
        Sigma2Mode::Free,
        true,
        true,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::sample_dense;
    use crate::inference::CovarianceModel;
    use ndarray::Array2;

    #[test]
    fn model_has_the_documented_parameters() {
        let g = Graph::lattice(WHEAT_ROWS, WHEAT_COLS).unwrap();
        let model = wheat_model(&g).unwrap();
        let names = model.param_names();
        assert_eq!(names.len(), BASIS_K + 3);
        assert_eq!(names[0], "eta1_row");
        assert_eq!(names[1], "eta1_col");
        assert_eq!(names[2], "eta2");
        assert_eq!(names[BASIS_K - 1], "eta19");
        assert_eq!(&names[BASIS_K..], &["sigma2", "tau2", "beta0"]);
    }

    #[test]
    fn rejects_wrong_grid_shape() {
        let y = Array2::zeros((25, 20));
        assert!(wheat_pipeline(&y.view(), 0).is_err());
    }

    #[test]
    fn synthetic_yields_run_end_to_end() {
        // simulate from the yield model itself on a small lattice at mild
        // parameter values and check the analysis recovers the broad strokes
        let (rows, cols, k) = (12, 15, 5);
        let g = Graph::lattice(rows, cols).unwrap();
        let model = yield_model(&g, k).unwrap();
        let mut theta = Array1::zeros(model.dim());
        let d = model.dim();
        theta[0] = -0.5; // eta1_row
        theta[1] = 0.4; // eta1_col
        theta[d - 3] = (0.15f64).ln(); // sigma2
        theta[d - 2] = (0.07f64).ln(); // tau2
        theta[d - 1] = 4.0; // beta0
        let sigma = model.prepare(&theta.view()).unwrap().sigma().unwrap();
        let mut rng = seed::rng(99);
        let flat = sample_dense(&sigma, 1, &mut rng).unwrap() + 4.0;
        let grid = flat.into_shape_with_order((rows, cols)).unwrap();

        let analysis = lattice_yield_analysis(&grid.view(), k, 7).unwrap();
        assert!(!analysis.fit.diverged);
        let b0 = analysis.fit.estimate("beta0").unwrap();
        assert!((b0 - 4.0).abs() < 0.5, "beta0 {b0}");
        assert_eq!(analysis.log_weights.len(), g.q());
        assert_eq!(analysis.intervals.len(), model.dim());
        // residuals are the nugget part; their Moran's I should be modest
        assert!(analysis.morans.1 > 0.001, "p = {}", analysis.morans.1);
        let rec = &analysis.report.replicates[0];
        assert!(rec.metrics.contains_key("eta1_row"));
        assert!(rec.metrics.contains_key("morans_p"));
    }
}
