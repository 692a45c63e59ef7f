//! Command implementations. Each `run` takes a resolved config plus an
//! output directory, echoes the config as config.json, does the work and
//! writes its files. Everything that affects the outputs lives in the
//! config, so `rerun` on the echo reproduces them byte for byte.

pub mod basis;
pub mod experiment;
pub mod fit;
pub mod mcmc;
pub mod simulate;

use std::path::Path;

use ndarray::Array2;

use graphcov::basis::{lgl_eigenbasis, orthogonalized_basis, EdgeCovariates};
use graphcov::covariance::Smoothness;
use graphcov::experiments::rowcol_design;
use graphcov::inference::{CarModel, CovarianceModel, GdefModel, Sigma2Mode, WeightDesign};
use graphcov::{io, Error, Graph, Result};

use crate::config::{FitFamily, InterceptPolicy, RunConfig};

/// Create the output directory and write the config echo into it.
pub fn prepare_outdir(out: &Path, config: &RunConfig) -> Result<()> {
    std::fs::create_dir_all(out)?;
    io::write_json(&out.join("config.json"), config)
}

/// Load replicate data for a graph: default is an n x p matrix with one
/// replicate per row; `grid_data` reads a rows x cols lattice grid (one
/// value per node) and flattens it row-major into a single replicate.
pub fn load_data(path: &str, grid_data: bool, g: &Graph) -> Result<Array2<f64>> {
    let raw = io::read_matrix_csv(Path::new(path))?;
    if grid_data {
        let (rows, cols) = g.lattice_dims().ok_or_else(|| {
            Error::InvalidValue("--grid-data requires a lattice graph".into())
        })?;
        if raw.nrows() != rows || raw.ncols() != cols {
            return Err(Error::InvalidValue(format!(
                "grid data must be {rows} x {cols} to match the lattice, got {} x {}",
                raw.nrows(),
                raw.ncols()
            )));
        }
        let p = g.p();
        Ok(raw
            .into_shape_with_order((1, p))
            .expect("grid flattens to one row"))
    } else {
        if raw.ncols() != g.p() {
            return Err(Error::InvalidValue(format!(
                "data must have one column per node ({}), got {}",
                g.p(),
                raw.ncols()
            )));
        }
        Ok(raw)
    }
}

/// Load a dense q x r edge-covariate matrix and name its columns x1..xr.
pub fn load_covariates(path: &str, g: &Graph) -> Result<EdgeCovariates> {
    let x = io::read_matrix_csv(Path::new(path))?;
    if x.nrows() != g.q() {
        return Err(Error::InvalidValue(format!(
            "covariates must have one row per edge ({}), got {}",
            g.q(),
            x.nrows()
        )));
    }
    let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
    EdgeCovariates::new(x, names)
}

/// Assemble the weight design shared by `fit` and `mcmc`: eigenbasis
/// (orthogonalized when covariates are present) under the requested
/// intercept policy.
pub fn build_design(
    g: &Graph,
    k: usize,
    covariates: Option<&str>,
    intercept: InterceptPolicy,
) -> Result<WeightDesign> {
    match intercept {
        InterceptPolicy::Rowcol => {
            if covariates.is_some() {
                return Err(Error::InvalidValue(
                    "the row/column intercept split does not combine with edge covariates".into(),
                ));
            }
            rowcol_design(g, k)
        }
        InterceptPolicy::Free | InterceptPolicy::Fixed => {
            let drop = intercept == InterceptPolicy::Fixed;
            match covariates {
                Some(path) => {
                    let xe = load_covariates(path, g)?;
                    let basis = orthogonalized_basis(g, &xe, k)?;
                    WeightDesign::from_model_parts(&basis, Some(&xe), drop)
                }
                None => {
                    let basis = lgl_eigenbasis(g, k)?;
                    WeightDesign::from_model_parts(&basis, None, drop)
                }
            }
        }
    }
}

/// A fit-capable model of either family, dispatching to the shared trait
/// for inference and to the concrete type for implied weights.
pub enum Model {
    Gdef(GdefModel),
    Car(CarModel),
}

impl Model {
    pub fn as_dyn(&self) -> &dyn CovarianceModel {
        match self {
            Model::Gdef(m) => m,
            Model::Car(m) => m,
        }
    }

    pub fn weights_of(&self, theta: &ndarray::ArrayView1<f64>) -> Result<graphcov::EdgeWeights> {
        match self {
            Model::Gdef(m) => m.weights_of(theta),
            Model::Car(m) => m.weights_of(theta),
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn build_model(
    g: &Graph,
    family: FitFamily,
    nu: Smoothness,
    k: usize,
    covariates: Option<&str>,
    intercept: InterceptPolicy,
    nugget: bool,
    estimate_mean: bool,
    fix_sigma2: Option<f64>,
) -> Result<Model> {
    let design = build_design(g, k, covariates, intercept)?;
    let sigma2 = match fix_sigma2 {
        Some(v) => {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidValue(format!(
                    "fix_sigma2 must be positive and finite, got {v}"
                )));
            }
            Sigma2Mode::Fixed(v)
        }
        None => Sigma2Mode::Free,
    };
    match family {
        FitFamily::Gdef => Ok(Model::Gdef(GdefModel::new(
            g.clone(),
            design,
            nu,
            sigma2,
            nugget,
            estimate_mean,
        )?)),
        FitFamily::Car => Ok(Model::Car(CarModel::new(
            g.clone(),
            design,
            sigma2,
            nugget,
            estimate_mean,
        )?)),
    }
}
