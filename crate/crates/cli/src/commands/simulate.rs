//! `simulate`: draw from a covariance built from flags, or reproduce one
//! of the named figure presets as tidy node fields.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

use graphcov::basis::lgl_eigenbasis;
use graphcov::covariance::{
    car_precision, gdef_covariance, icar_structure, CovarianceSpec, Family, Smoothness,
};
use graphcov::inference::WeightDesign;
use graphcov::{io, seed, EdgeWeights, Error, Graph, Result};

use super::prepare_outdir;
use crate::config::{
    FigureName, GraphSource, RunConfig, SimulateConfig, SimulateMode, WeightsSpec,
};

pub fn run(cfg: &SimulateConfig, out: &Path) -> Result<()> {
    prepare_outdir(out, &RunConfig::Simulate(cfg.clone()))?;
    match &cfg.mode {
        SimulateMode::Single {
            graph,
            spec,
            weights,
            n,
        } => run_single(graph, spec, weights, *n, cfg.seed, out),
        SimulateMode::Figure { name, kappa } => run_figure(*name, *kappa, cfg.seed, out),
    }
}

fn resolve_weights(g: &Graph, weights: &WeightsSpec) -> Result<EdgeWeights> {
    match weights {
        WeightsSpec::Uniform { value } => EdgeWeights::uniform(g.q(), *value),
        WeightsSpec::Basis { coefficients } => {
            let eta = Array1::from_vec(coefficients.clone());
            let basis = lgl_eigenbasis(g, eta.len())?;
            let design = WeightDesign::from_model_parts(&basis, None, false)?;
            design.weights(&eta.view())
        }
    }
}

/// Zero-mean draws for any family. ICAR has no marginal variance of its
/// own, so sigma^2 scales the sum-to-zero field and tau^2 adds the nugget
/// here; the dense families carry both inside the realization.
fn sample_spec(
    g: &Graph,
    w: &EdgeWeights,
    spec: &CovarianceSpec,
    n: usize,
    seed_val: u64,
) -> Result<Array2<f64>> {
    spec.validate()?;
    let mut rng = seed::rng(seed_val);
    match spec.family {
        Family::Gdef => gdef_covariance(g, w, spec)?.sample(n, &mut rng),
        Family::Car => car_precision(g, w, spec)?.sample(n, &mut rng),
        Family::Icar => {
            let real = icar_structure(g, w)?;
            let mut y = real.sample(n, &mut rng)?;
            y *= spec.sigma2.sqrt();
            if spec.tau2 > 0.0 {
                let tau = spec.tau2.sqrt();
                y.mapv_inplace(|v| v + tau * rng.sample::<f64, _>(StandardNormal));
            }
            Ok(y)
        }
    }
}

fn run_single(
    graph: &GraphSource,
    spec: &CovarianceSpec,
    weights: &WeightsSpec,
    n: usize,
    seed_val: u64,
    out: &Path,
) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidValue("n must be at least 1".into()));
    }
    let g = graph.load()?;
    let w = resolve_weights(&g, weights)?;
    let mut y = sample_spec(&g, &w, spec, n, seed_val)?;
    if spec.beta0 != 0.0 {
        y += spec.beta0;
    }
    io::write_matrix_csv(&out.join("sample.csv"), &y.view())?;
    eprintln!("simulate: {n} x {} sample -> {}", g.p(), out.display());
    Ok(())
}

/// One figure panel: output file, lattice size, covariance spec and edge
/// weights.
struct Panel {
    file: String,
    rows: usize,
    cols: usize,
    spec: CovarianceSpec,
    weights: WeightsSpec,
}

fn basis_weights(coefficients: &[f64]) -> WeightsSpec {
    WeightsSpec::Basis {
        coefficients: coefficients.to_vec(),
    }
}

fn figure_panels(name: FigureName, kappa: f64) -> Vec<Panel> {
    const SIDE: usize = 30;
    match name {
        // model rows crossed with a uniform-weight sweep
        FigureName::Covcomp => {
            let models: Vec<(&str, CovarianceSpec)> = vec![
                ("car", CovarianceSpec::car(1.0, kappa)),
                ("icar", CovarianceSpec::icar()),
                ("gdef12", CovarianceSpec::gdef(Smoothness::Half, 1.0)),
                ("gdef32", CovarianceSpec::gdef(Smoothness::ThreeHalves, 1.0)),
                ("gdef52", CovarianceSpec::gdef(Smoothness::FiveHalves, 1.0)),
                ("gdefinf", CovarianceSpec::gdef(Smoothness::Infinity, 1.0)),
            ];
            let mut panels = Vec::new();
            for (tag, spec) in models {
                for w in [4.0, 1.0, 0.25] {
                    panels.push(Panel {
                        file: format!("covcomp_{tag}_w{w}.csv"),
                        rows: SIDE,
                        cols: SIDE,
                        spec: spec.clone(),
                        weights: WeightsSpec::Uniform { value: w },
                    });
                }
            }
            panels
        }
        FigureName::Icarres => [(10, 10), (20, 20), (30, 30)]
            .into_iter()
            .map(|(r, c)| Panel {
                file: format!("icarres_{r}x{c}.csv"),
                rows: r,
                cols: c,
                spec: CovarianceSpec::icar(),
                weights: WeightsSpec::Uniform { value: 1.0 },
            })
            .collect(),
        // one smooth two-eigenvector weight field under the three models
        FigureName::Covcomp2 => {
            let eta = [50.0, 50.0];
            let models: Vec<(&str, CovarianceSpec)> = vec![
                ("car", CovarianceSpec::car(1.0, kappa)),
                ("icar", CovarianceSpec::icar()),
                ("gdef32", CovarianceSpec::gdef(Smoothness::ThreeHalves, 1.0)),
            ];
            models
                .into_iter()
                .map(|(tag, spec)| Panel {
                    file: format!("covcomp2_{tag}.csv"),
                    rows: SIDE,
                    cols: SIDE,
                    spec,
                    weights: basis_weights(&eta),
                })
                .collect()
        }
        FigureName::Example => vec![Panel {
            file: "example_gdefinf.csv".into(),
            rows: SIDE,
            cols: SIDE,
            spec: CovarianceSpec::gdef(Smoothness::Infinity, 1.0),
            weights: basis_weights(&[0.0, 20.0, 20.0, 60.0]),
        }],
    }
}

fn run_figure(name: FigureName, kappa: f64, seed_val: u64, out: &Path) -> Result<()> {
    let panels = figure_panels(name, kappa);
    for (idx, panel) in panels.iter().enumerate() {
        let g = Graph::lattice(panel.rows, panel.cols)?;
        let w = resolve_weights(&g, &panel.weights)?;
        let y = sample_spec(&g, &w, &panel.spec, 1, seed::derive(seed_val, idx as u64))?;
        io::write_node_field_csv(&out.join(&panel.file), panel.rows, panel.cols, &y.row(0))?;
    }
    eprintln!(
        "simulate: figure {} ({} panels) -> {}",
        name.as_str(),
        panels.len(),
        out.display()
    );
    Ok(())
}
