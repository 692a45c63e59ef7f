//! Random smooth deformations of a lattice.
//!
//! A deformation drags every grid point toward or away from a handful of
//! randomly placed centers. Each center carries a log-uniform factor alpha:
//! points near the center move to `d + alpha (x - d)` (alpha < 1 contracts,
//! alpha > 1 expands) while a radial Gaussian taper blends back to the
//! identity far away, so the map stays smooth and close to the original
//! lattice at its edges. Centers apply sequentially, compounding.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed;

/// A lattice together with deformed node coordinates.
///
/// Nodes are ordered row-major to match [`crate::graph::Graph::lattice`];
/// original coordinates are the 1-based lattice positions (row, column).
#[derive(Debug, Clone, Serialize)]
pub struct DeformedGrid {
    pub rows: usize,
    pub cols: usize,
    pub original: Vec<(f64, f64)>,
    pub deformed: Vec<(f64, f64)>,
    /// Deformation centers, inside (1, rows) x (1, cols).
    pub points: Vec<(f64, f64)>,
    /// Expansion (> 1) or contraction (< 1) factor per center.
    pub factors: Vec<f64>,
    pub seed: u64,
}

impl DeformedGrid {
    pub fn p(&self) -> usize {
        self.rows * self.cols
    }
}

/// Deform a `rows x cols` lattice with `n_points` random centers whose
/// factors are log-uniform on `[1/strength, strength]`. The taper scale is a
/// quarter of the grid diameter; `strength = 1` gives the identity map.
pub fn deform_grid(
    rows: usize,
    cols: usize,
    n_points: usize,
    strength: f64,
    seed_val: u64,
) -> Result<DeformedGrid> {
    if rows < 2 || cols < 2 {
        return Err(Error::InvalidValue(format!(
            "deformation grid needs at least 2 rows and columns, got {rows} x {cols}"
        )));
    }
    if n_points == 0 {
        return Err(Error::InvalidValue("need at least one deformation point".into()));
    }
    if !(strength.is_finite() && strength > 0.0) {
        return Err(Error::InvalidValue(format!(
            "deformation strength must be positive, got {strength}"
        )));
    }
    let mut rng = seed::rng(seed_val);
    let mut uniform = move || rand::Rng::random::<f64>(&mut rng);

    let original: Vec<(f64, f64)> = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| ((r + 1) as f64, (c + 1) as f64)))
        .collect();
    let mut current = original.clone();

    let diameter = (((rows - 1).pow(2) + (cols - 1).pow(2)) as f64).sqrt();
    let s2 = (diameter / 4.0).powi(2);
    let (lo, hi) = {
        let a = strength.recip().ln();
        let b = strength.ln();
        (a.min(b), a.max(b))
    };

    let mut points = Vec::with_capacity(n_points);
    let mut factors = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let d = (
            1.0 + uniform() * (rows as f64 - 1.0),
            1.0 + uniform() * (cols as f64 - 1.0),
        );
        let alpha = (lo + uniform() * (hi - lo)).exp();
        for x in current.iter_mut() {
            let dx = x.0 - d.0;
            let dy = x.1 - d.1;
            let taper = (-(dx * dx + dy * dy) / (2.0 * s2)).exp();
            x.0 += taper * (alpha - 1.0) * dx;
            x.1 += taper * (alpha - 1.0) * dy;
        }
        points.push(d);
        factors.push(alpha);
    }

    Ok(DeformedGrid {
        rows,
        cols,
        original,
        deformed: current,
        points,
        factors,
        seed: seed_val,
    })
}
