//! `fit`: maximum likelihood by Fisher scoring, writing the estimate and
//! the fitted log edge weights.

use std::path::Path;

use graphcov::inference::{default_start, fit_mle, FitOptions};
use graphcov::{io, Error, Result};

use super::{build_model, load_data, prepare_outdir};
use crate::config::{FitConfig, RunConfig};

/// Writes fit.json and log_weights.csv. A diverged fit still writes both,
/// then errors (exit 3) unless `allow_diverged` accepts it.
pub fn run(cfg: &FitConfig, out: &Path) -> Result<()> {
    let g = cfg.graph.load()?;
    let y = load_data(&cfg.data, cfg.grid_data, &g)?;
    let model = build_model(
        &g,
        cfg.family,
        cfg.nu,
        cfg.k,
        cfg.covariates.as_deref(),
        cfg.intercept,
        cfg.nugget,
        cfg.estimate_mean,
        cfg.fix_sigma2,
    )?;
    prepare_outdir(out, &RunConfig::Fit(cfg.clone()))?;

    let opts = FitOptions {
        step_scale: cfg.gamma,
        max_iter: cfg.max_iter,
        ..FitOptions::default()
    };
    let theta0 = default_start(model.as_dyn(), &y.view());
    let fit = fit_mle(model.as_dyn(), &y.view(), &theta0.view(), &opts)?;

    io::write_fit_json(&out.join("fit.json"), &fit)?;
    let log_w = model.weights_of(&fit.theta.view())?.values().mapv(f64::ln);
    io::write_edge_field_csv(&out.join("log_weights.csv"), &log_w.view())?;

    eprintln!(
        "fit: loglik {:.4}, {} iterations, converged = {} -> {}",
        fit.loglik,
        fit.iterations,
        fit.converged,
        out.display()
    );
    if fit.diverged && !cfg.allow_diverged {
        return Err(Error::Numerical(
            "fit diverged (outputs written); pass --allow-diverged to accept it".into(),
        ));
    }
    Ok(())
}
