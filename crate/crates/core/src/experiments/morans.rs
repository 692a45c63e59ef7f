//! Moran's I with a permutation test.
//!
//! The statistic is computed on centered values with the 0/1 adjacency of
//! the graph as spatial weights. Significance comes from random relabelings
//! of the nodes; the two-sided p-value doubles the smaller tail, with the
//! add-one convention that counts the observed statistic among the
//! permutations.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::seed;
use ndarray::ArrayView1;

/// Moran's I of `values` on `g` and its permutation p-value.
///
/// `I = (p / (2q)) * (sum over edges of 2 r_i r_j) / (r' r)` with `r` the
/// centered values and `q` the edge count.
pub fn morans_i(
    values: &ArrayView1<f64>,
    g: &Graph,
    permutations: usize,
    seed_val: u64,
) -> Result<(f64, f64)> {
    let p = g.p();
    if values.len() != p {
        return Err(Error::dim("values", p, values.len()));
    }
    if permutations == 0 {
        return Err(Error::InvalidValue("need at least one permutation".into()));
    }
    let mean = values.sum() / p as f64;
    let mut r: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let denom: f64 = r.iter().map(|v| v * v).sum();
    if denom <= 0.0 {
        return Err(Error::InvalidValue(
            "Moran's I undefined for constant values".into(),
        ));
    }

    let stat = |r: &[f64]| -> f64 {
        let cross: f64 = g.edges().iter().map(|&(i, j)| r[i] * r[j]).sum();
        // r' W r = 2 * cross, sum of W entries = 2q
        (p as f64 / (2.0 * g.q() as f64)) * 2.0 * cross / denom
    };
    let observed = stat(&r);

    let mut rng = seed::rng(seed_val);
    let mut at_least = 0usize;
    let mut at_most = 0usize;
    for _ in 0..permutations {
        r.shuffle(&mut rng);
        let s = stat(&r);
        if s >= observed {
            at_least += 1;
        }
        if s <= observed {
            at_most += 1;
        }
    }
    let upper = (at_least + 1) as f64 / (permutations + 1) as f64;
    let lower = (at_most + 1) as f64 / (permutations + 1) as f64;
    let p_value = (2.0 * upper.min(lower)).min(1.0);
    Ok((observed, p_value))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;
    use rand_distr::StandardNormal;

    #[test]
    fn checkerboard_is_negatively_autocorrelated() {
        let g = Graph::lattice(6, 6).unwrap();
        let vals = Array1::from_shape_fn(36, |i| {
            let (r, c) = (i / 6, i % 6);
            if (r + c) % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        });
        let (i_stat, p) = morans_i(&vals.view(), &g, 999, 4).unwrap();
        assert!(i_stat < -0.9, "I = {i_stat}");
        assert!(p < 0.01, "p = {p}");
    }

    #[test]
    fn smooth_gradient_is_positively_autocorrelated() {
        let g = Graph::lattice(6, 6).unwrap();
        let vals = Array1::from_shape_fn(36, |i| (i / 6) as f64 + 0.1 * (i % 6) as f64);
        let (i_stat, p) = morans_i(&vals.view(), &g, 999, 4).unwrap();
        assert!(i_stat > 0.5, "I = {i_stat}");
        assert!(p < 0.01, "p = {p}");
    }

    #[test]
    fn null_p_values_are_roughly_uniform() {
        // under iid noise the p-value should not pile up near 0 or 1
        let g = Graph::lattice(5, 5).unwrap();
        let mut ps = Vec::new();
        for rep in 0..40 {
            let mut rng = seed::rng(1000 + rep);
            let vals = Array1::from_shape_fn(25, |_| {
                rand::Rng::sample::<f64, _>(&mut rng, StandardNormal)
            });
            let (_, p) = morans_i(&vals.view(), &g, 399, rep).unwrap();
            ps.push(p);
        }
        let mean = ps.iter().sum::<f64>() / ps.len() as f64;
        assert!((0.3..0.7).contains(&mean), "mean p = {mean}");
        // Kolmogorov-Smirnov distance against U(0,1), generous threshold
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let ks = ps
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let ecdf_hi = (i + 1) as f64 / ps.len() as f64;
                let ecdf_lo = i as f64 / ps.len() as f64;
                (ecdf_hi - p).abs().max((p - ecdf_lo).abs())
            })
            .fold(0.0f64, f64::max);
        assert!(ks < 0.35, "ks = {ks}");
    }

    #[test]
    fn deterministic_in_seed() {
        let g = Graph::lattice(4, 4).unwrap();
        let vals = Array1::from_shape_fn(16, |i| (i as f64 * 0.7).sin());
        let a = morans_i(&vals.view(), &g, 499, 9).unwrap();
        let b = morans_i(&vals.view(), &g, 499, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn constant_values_rejected() {
        let g = Graph::lattice(3, 3).unwrap();
        let vals = Array1::from_elem(9, 2.5);
        assert!(morans_i(&vals.view(), &g, 99, 0).is_err());
    }
}
