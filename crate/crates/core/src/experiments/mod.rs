//! Simulation studies and the wheat-yield analysis.
//!
//! Each driver is a pure function of its parameters and a master seed:
//! replicates draw child generators through [`crate::seed::derive`], run in
//! parallel, and are aggregated in index order, so reports are reproducible
//! bit for bit regardless of thread scheduling. Results come back as an
//! [`ExperimentReport`]: named per-replicate metrics plus their Monte Carlo
//! means and standard errors.
//!
//! The four studies:
//!
//! * [`sim1_coverage`]: Wald interval coverage for basis coefficients under
//!   a correctly specified GDEF model;
//! * [`sim2_model_selection`]: AIC/BIC basis-size selection when the true
//!   log-weight field is an ICAR draw on the line graph;
//! * [`sim3_misspecification`]: KL divergence from a deformed-lattice
//!   Matern truth for GDEF, coordinate-Matern and CAR fits;
//! * [`wheat_pipeline`]: the 20 x 25 wheat-yield lattice with row/column
//!   weight effects, smoothing, and a Moran's I residual check.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use serde::Serialize;

mod deform;
mod morans;
mod sim1;
mod sim2;
mod sim3;
mod wheat;

pub use deform::{deform_grid, DeformedGrid};
pub use morans::morans_i;
pub use sim1::sim1_coverage;
pub use sim2::{selection_mode, sim2_icar_weights, sim2_model_selection};
pub use sim3::{sim3_misspecification, Sim3Model};
pub use wheat::{
    lattice_yield_analysis, rowcol_design, wheat_model, wheat_pipeline, yield_model, WheatAnalysis,
    WHEAT_COLS, WHEAT_ROWS,
};

pub use crate::inference::{coord_distances, matern_covariance_from_coords};

use crate::error::{Error, Result};
use crate::linalg::Chol;
use ndarray::Array2;

/// One replicate of a study: its derived seed, whether the fit diverged or
/// failed, and whatever named metrics the replicate produced.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    pub diverged: bool,
    pub metrics: BTreeMap<String, f64>,
}

/// Monte Carlo mean of one metric over the replicates that reported it.
#[derive(Debug, Clone, Serialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    /// Standard error of the mean, sd / sqrt(count); zero for a single
    /// replicate.
    pub mcse: f64,
    pub count: usize,
}

/// A full study result: parameters, per-replicate metrics, aggregates.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub scenario: String,
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub seed: u64,
    pub replicates: Vec<ReplicateRecord>,
    pub aggregates: Vec<MetricSummary>,
    /// Wall-clock diagnostic; left out of serialized reports so identical
    /// runs produce identical files.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    /// Assemble a report, computing aggregates from the replicate records.
    /// Records are sorted by index first so that parallel completion order
    /// cannot perturb the floating-point reductions.
    pub fn assemble(
        scenario: &str,
        parameters: BTreeMap<String, serde_json::Value>,
        seed: u64,
        mut replicates: Vec<ReplicateRecord>,
        started: Instant,
    ) -> ExperimentReport {
        replicates.sort_by_key(|r| r.index);
        let names: BTreeSet<&String> =
            replicates.iter().flat_map(|r| r.metrics.keys()).collect();
        let mut aggregates = Vec::with_capacity(names.len());
        for name in names {
            let values: Vec<f64> = replicates
                .iter()
                .filter_map(|r| r.metrics.get(name).copied())
                .filter(|v| v.is_finite())
                .collect();
            if values.is_empty() {
                continue;
            }
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let mcse = if count > 1 {
                let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (count - 1) as f64;
                (var / count as f64).sqrt()
            } else {
                0.0
            };
            aggregates.push(MetricSummary {
                metric: name.clone(),
                mean,
                mcse,
                count,
            });
        }
        ExperimentReport {
            scenario: scenario.into(),
            parameters,
            seed,
            replicates,
            aggregates,
            runtime_seconds: started.elapsed().as_secs_f64(),
        }
    }

    pub fn aggregate(&self, metric: &str) -> Option<&MetricSummary> {
        self.aggregates.iter().find(|a| a.metric == metric)
    }
}

/// Kullback-Leibler divergence between centered Gaussians,
/// `KL(N(0, sigma_true) || N(0, sigma_hat))
///  = (ln(|sigma_hat| / |sigma_true|) + tr(sigma_hat^-1 sigma_true) - p) / 2`.
pub fn kl_gaussians(sigma_true: &Array2<f64>, sigma_hat: &Array2<f64>) -> Result<f64> {
    let p = sigma_true.nrows();
    if sigma_true.ncols() != p {
        return Err(Error::dim("sigma_true columns", p, sigma_true.ncols()));
    }
    if sigma_hat.nrows() != p || sigma_hat.ncols() != p {
        return Err(Error::dim("sigma_hat rows", p, sigma_hat.nrows()));
    }
    let ch_true = Chol::new(sigma_true)
        .map_err(|_| Error::Numerical("sigma_true not positive definite".into()))?;
    let ch_hat = Chol::new(sigma_hat)
        .map_err(|_| Error::Numerical("sigma_hat not positive definite".into()))?;
    let trace = ch_hat
        .solve_mat(sigma_true)?
        .diag()
        .sum();
    Ok(0.5 * (ch_hat.ln_det() - ch_true.ln_det() + trace - p as f64))
}
