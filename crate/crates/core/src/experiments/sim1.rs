//! Wald coverage under a correctly specified GDEF model.
//!
//! Each replicate draws basis coefficients from the generating prior
//! `eta ~ N(0, diag(0.5, 25, ..., 25))`, simulates data from the implied
//! GDEF covariance with nu = 3/2 and sigma^2 = 1 held fixed, refits by
//! maximum likelihood, and records the fraction of coefficients whose 90%
//! Wald interval covers the truth. Diverged or failed fits are counted but
//! excluded from the coverage average.

use std::collections::BTreeMap;
use std::time::Instant;

use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{ExperimentReport, ReplicateRecord};
use crate::basis::lgl_eigenbasis;
use crate::covariance::{gdef_covariance, CovarianceSpec, Smoothness};
use crate::error::Result;
use crate::graph::Graph;
use crate::inference::{
    default_start, fit_mle, wald_intervals, FitOptions, GdefModel, Sigma2Mode, WeightDesign,
};
use crate::seed;
use ndarray::Array1;

const PRIOR_VAR_FIRST: f64 = 0.5;
const PRIOR_VAR_REST: f64 = 25.0;
const LEVEL: f64 = 0.90;

/// Coverage study on a `rows x cols` lattice with a k-column eigenbasis,
/// `n` replicate observations per dataset and `replicates` datasets.
pub fn sim1_coverage(
    rows: usize,
    cols: usize,
    k: usize,
    n: usize,
    replicates: usize,
    seed_val: u64,
) -> Result<ExperimentReport> {
    let started = Instant::now();
    let g = Graph::lattice(rows, cols)?;
    let basis = lgl_eigenbasis(&g, k)?;
    let design = WeightDesign::from_model_parts(&basis, None, false)?;
    let spec = CovarianceSpec::gdef(Smoothness::ThreeHalves, 1.0);
    let opts = FitOptions::default();

    let records: Vec<ReplicateRecord> = (0..replicates)
        .into_par_iter()
        .map(|rep| -> Result<ReplicateRecord> {
            let child = seed::derive(seed_val, rep as u64);
            let mut rng = seed::rng(child);
            let mut draw = |sd: f64| -> f64 {
                sd * rand::Rng::sample::<f64, _>(&mut rng, StandardNormal)
            };
            let mut eta = Array1::zeros(k);
            eta[0] = draw(PRIOR_VAR_FIRST.sqrt());
            for j in 1..k {
                eta[j] = draw(PRIOR_VAR_REST.sqrt());
            }
            let w = design.weights(&eta.view())?;
            let real = gdef_covariance(&g, &w, &spec)?;
            let y = real.sample(n, &mut rng)?;

            let model = GdefModel::new(
                g.clone(),
                design.clone(),
                Smoothness::ThreeHalves,
                Sigma2Mode::Fixed(1.0),
                false,
                false,
            )?;
            let theta0 = default_start(&model, &y.view());
            let mut metrics = BTreeMap::new();
            let mut diverged = true;
            match fit_mle(&model, &y.view(), &theta0.view(), &opts) {
                Ok(fit) if !fit.diverged => match wald_intervals(&fit, LEVEL) {
                    Ok(ints) => {
                        let covered = ints
                            .iter()
                            .zip(eta.iter())
                            .filter(|(ci, truth)| ci.covers(**truth))
                            .count();
                        metrics.insert(
                            "coverage".into(),
                            covered as f64 / k as f64,
                        );
                        metrics.insert(
                            "converged".into(),
                            if fit.converged { 1.0 } else { 0.0 },
                        );
                        diverged = false;
                    }
                    Err(_) => {}
                },
                _ => {}
            }
            metrics.insert("diverged".into(), if diverged { 1.0 } else { 0.0 });
            Ok(ReplicateRecord {
                index: rep,
                seed: child,
                diverged,
                metrics,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let parameters = BTreeMap::from([
        ("rows".into(), rows.into()),
        ("cols".into(), cols.into()),
        ("k".into(), k.into()),
        ("n".into(), n.into()),
        ("replicates".into(), replicates.into()),
        ("level".into(), LEVEL.into()),
        ("nu".into(), "3/2".into()),
    ]);
    Ok(ExperimentReport::assemble(
        "sim1",
        parameters,
        seed_val,
        records,
        started,
    ))
}
