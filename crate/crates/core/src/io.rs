//! File formats: CSV for matrices, graphs, bases, fields and chains, JSON
//! for fit results and experiment reports.
//!
//! Conventions, shared with every command-line surface:
//!
//! * matrix CSV is dense and headerless, one row per line, row-major;
//! * edge lists have a `i,j` or `i,j,w` header with zero-based node
//!   indices; the loader canonicalizes endpoint and edge order, carrying
//!   weights through the same permutation;
//! * tidy field exports are `row,col,value` for node fields on lattices
//!   and `edge_index,value` for edge fields;
//! * floats round-trip exactly (shortest representation that parses back
//!   to the same bits), so rewriting unchanged data is byte-identical.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::basis::EdgeBasis;
use crate::error::{Error, Result};
use crate::experiments::ExperimentReport;
use crate::graph::{EdgeWeights, Graph};
use crate::inference::{FitResult, PosteriorChain};
use ndarray::{Array2, ArrayView1, ArrayView2};

fn parse_field(path: &Path, line: usize, field: &str) -> Result<f64> {
    field.trim().parse::<f64>().map_err(|_| Error::Parse {
        path: path.display().to_string(),
        msg: format!("line {line}: '{field}' is not a number"),
    })
}

/// Write a dense headerless CSV, one matrix row per line.
pub fn write_matrix_csv(path: &Path, a: &ArrayView2<f64>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for row in a.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Read a dense headerless CSV into a matrix; all rows must have the same
/// length.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let content = std::fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for (idx, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        match ncols {
            None => ncols = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    msg: format!("line {}: expected {} fields, got {}", idx + 1, c, fields.len()),
                })
            }
            _ => {}
        }
        for f in fields {
            data.push(parse_field(path, idx + 1, f)?);
        }
        nrows += 1;
    }
    let ncols = ncols.ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        msg: "empty matrix file".into(),
    })?;
    Array2::from_shape_vec((nrows, ncols), data).map_err(|_| Error::Parse {
        path: path.display().to_string(),
        msg: "ragged rows".into(),
    })
}

/// Write `i,j[,w]` with zero-based node indices in the graph's canonical
/// edge order.
pub fn write_edge_list_csv(path: &Path, g: &Graph, weights: Option<&EdgeWeights>) -> Result<()> {
    if let Some(w) = weights {
        if w.len() != g.q() {
            return Err(Error::dim("edge weights", g.q(), w.len()));
        }
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", if weights.is_some() { "i,j,w" } else { "i,j" })?;
    for (e, &(i, j)) in g.edges().iter().enumerate() {
        match weights {
            Some(w) => writeln!(out, "{i},{j},{}", w.values()[e])?,
            None => writeln!(out, "{i},{j}")?,
        }
    }
    Ok(())
}

/// Read an edge list written by [`write_edge_list_csv`] or by hand. Node
/// count is inferred from the largest index; endpoint order and edge
/// order are canonicalized, with weights carried along.
pub fn read_edge_list_csv(path: &Path) -> Result<(Graph, Option<EdgeWeights>)> {
    let content = std::fs::read_to_string(path)?;
    let mut lines = content.lines().enumerate();
    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        path: path.display().to_string(),
        msg: "empty edge list".into(),
    })?;
    let has_w = match header.trim() {
        "i,j" => false,
        "i,j,w" => true,
        other => {
            return Err(Error::Parse {
                path: path.display().to_string(),
                msg: format!("expected header 'i,j' or 'i,j,w', got '{other}'"),
            })
        }
    };
    let mut rows: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let expect = if has_w { 3 } else { 2 };
        if fields.len() != expect {
            return Err(Error::Parse {
                path: path.display().to_string(),
                msg: format!("line {}: expected {} fields", idx + 1, expect),
            });
        }
        let parse_idx = |f: &str| -> Result<usize> {
            f.trim().parse::<usize>().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                msg: format!("line {}: '{f}' is not a node index", idx + 1),
            })
        };
        let a = parse_idx(fields[0])?;
        let b = parse_idx(fields[1])?;
        let w = if has_w {
            parse_field(path, idx + 1, fields[2])?
        } else {
            1.0
        };
        rows.push((a.min(b), a.max(b), w));
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            msg: "edge list has no edges".into(),
        });
    }
    rows.sort_by_key(|r| (r.0, r.1));
    let p = rows.iter().map(|r| r.1).max().expect("non-empty") + 1;
    let edges: Vec<(usize, usize)> = rows.iter().map(|r| (r.0, r.1)).collect();
    let g = Graph::build(p, &edges)?;
    let weights = if has_w {
        Some(EdgeWeights::new(rows.iter().map(|r| r.2).collect())?)
    } else {
        None
    };
    Ok((g, weights))
}

#[derive(Serialize)]
struct BasisSidecar<'a> {
    k: usize,
    eigenvalues: &'a [f64],
    orthogonalized: bool,
    graph_hash: String,
}

/// Write the basis as tidy `edge_index,eigenvalue_rank,value` CSV plus a
/// JSON sidecar identifying the construction.
pub fn write_basis_csv(
    csv_path: &Path,
    sidecar_path: &Path,
    basis: &EdgeBasis,
    g: &Graph,
) -> Result<()> {
    if basis.q() != g.q() {
        return Err(Error::dim("basis rows", g.q(), basis.q()));
    }
    let mut out = BufWriter::new(File::create(csv_path)?);
    writeln!(out, "edge_index,eigenvalue_rank,value")?;
    let v = basis.vectors();
    for e in 0..basis.q() {
        for r in 0..basis.k() {
            writeln!(out, "{e},{r},{}", v[[e, r]])?;
        }
    }
    drop(out);
    let sidecar = BasisSidecar {
        k: basis.k(),
        eigenvalues: basis.eigenvalues(),
        orthogonalized: basis.orthogonalized(),
        graph_hash: g.hash_hex(),
    };
    write_json(sidecar_path, &sidecar)
}

/// Fit summary as JSON: natural-scale estimates and transformed-scale
/// standard errors keyed by parameter name.
pub fn fit_to_json(fit: &FitResult) -> serde_json::Value {
    let theta_hat: BTreeMap<&str, f64> = fit
        .param_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), fit.natural[i]))
        .collect();
    let se: BTreeMap<&str, f64> = fit
        .param_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), fit.se[i]))
        .collect();
    serde_json::json!({
        "theta_hat": theta_hat,
        "loglik": fit.loglik,
        "aic": fit.aic,
        "bic": fit.bic,
        "converged": fit.converged,
        "diverged": fit.diverged,
        "iterations": fit.iterations,
        "se": se,
    })
}

pub fn write_fit_json(path: &Path, fit: &FitResult) -> Result<()> {
    write_json(path, &fit_to_json(fit))
}

/// One row per retained draw, natural scale, parameter names as header.
pub fn write_chain_csv(path: &Path, chain: &PosteriorChain) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{}", chain.param_names.join(","))?;
    for row in chain.draws.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

/// Tidy `row,col,value` export of a node field on a lattice, 1-based
/// lattice coordinates.
pub fn write_node_field_csv(
    path: &Path,
    rows: usize,
    cols: usize,
    values: &ArrayView1<f64>,
) -> Result<()> {
    if values.len() != rows * cols {
        return Err(Error::dim("node field", rows * cols, values.len()));
    }
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "row,col,value")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{},{},{v}", i / cols + 1, i % cols + 1)?;
    }
    Ok(())
}

/// Tidy `edge_index,value` export of an edge field.
pub fn write_edge_field_csv(path: &Path, values: &ArrayView1<f64>) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "edge_index,value")?;
    for (e, v) in values.iter().enumerate() {
        writeln!(out, "{e},{v}")?;
    }
    Ok(())
}

pub fn write_report_json(path: &Path, report: &ExperimentReport) -> Result<()> {
    write_json(path, report)
}

/// Aggregate table: `metric,mean,mcse,count`.
pub fn write_aggregates_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "metric,mean,mcse,count")?;
    for a in &report.aggregates {
        writeln!(out, "{},{},{},{}", a.metric, a.mean, a.mcse, a.count)?;
    }
    Ok(())
}

/// Per-replicate metrics in long form: `index,seed,diverged,metric,value`.
pub fn write_replicates_csv(path: &Path, report: &ExperimentReport) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "index,seed,diverged,metric,value")?;
    for r in &report.replicates {
        for (name, value) in &r.metrics {
            writeln!(out, "{},{},{},{name},{value}", r.index, r.seed, r.diverged)?;
        }
    }
    Ok(())
}

/// Load a yield grid; the wheat data is 20 rows of 25 comma-separated
/// plot yields, northmost row first.
pub fn read_yield_grid_csv(path: &Path) -> Result<Array2<f64>> {
    read_matrix_csv(path)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}
