//! `basis`: build the line-graph Laplacian eigenbasis for a graph and
//! export it.

use std::path::Path;

use graphcov::basis::lgl_eigenbasis;
use graphcov::{io, Result};

use super::{build_design, prepare_outdir};
use crate::config::{BasisConfig, InterceptPolicy, RunConfig};

/// Writes basis.csv (tidy edge_index, eigenvalue_rank, value), basis.json
/// (eigenvalues and graph hash) and, when covariates are given, design.csv
/// with the combined weight design.
pub fn run(cfg: &BasisConfig, out: &Path) -> Result<()> {
    let g = cfg.graph.load()?;
    prepare_outdir(out, &RunConfig::Basis(cfg.clone()))?;

    match &cfg.covariates {
        None => {
            let basis = lgl_eigenbasis(&g, cfg.k)?;
            io::write_basis_csv(&out.join("basis.csv"), &out.join("basis.json"), &basis, &g)?;
        }
        Some(path) => {
            let xe = super::load_covariates(path, &g)?;
            let basis = graphcov::basis::orthogonalized_basis(&g, &xe, cfg.k)?;
            io::write_basis_csv(&out.join("basis.csv"), &out.join("basis.json"), &basis, &g)?;
            let design = build_design(&g, cfg.k, Some(path), InterceptPolicy::Free)?;
            io::write_matrix_csv(&out.join("design.csv"), &design.matrix().view())?;
        }
    }
    eprintln!(
        "basis: {} edges, k = {} -> {}",
        g.q(),
        cfg.k,
        out.display()
    );
    Ok(())
}
