//! Graph representation and line-graph construction.
//!
//! A `Graph` is an undirected, connected, simple graph over nodes
//! `0..p`. Edges live in a canonical order, lexicographic on
//! `(min, max)` endpoints, and the position of an edge in that order is
//! its public identity: every vector indexed by edges (weights, basis
//! columns, covariates) uses it. Lattices additionally carry integer node
//! coordinates, 1-based, so geometry-aware operations (row/column
//! indicators, grid deformation) can recover the layout.

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    p: usize,
    edges: Vec<(usize, usize)>,
    coords: Option<Vec<(f64, f64)>>,
    lattice: Option<(usize, usize)>,
}

impl Graph {
    /// Build a graph from an edge list, canonicalizing edge order and
    /// validating simplicity and connectivity.
    pub fn build(p: usize, edge_list: &[(usize, usize)]) -> Result<Graph> {
        if p == 0 {
            return Err(Error::InvalidGraph("graph must have at least one node".into()));
        }
        let mut edges = Vec::with_capacity(edge_list.len());
        for &(a, b) in edge_list {
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at node {a}")));
            }
            if a >= p || b >= p {
                return Err(Error::InvalidGraph(format!(
                    "edge ({a}, {b}) references a node outside 0..{p}"
                )));
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        for win in edges.windows(2) {
            if win[0] == win[1] {
                return Err(Error::InvalidGraph(format!(
                    "duplicate edge ({}, {})",
                    win[0].0, win[0].1
                )));
            }
        }
        let g = Graph {
            p,
            edges,
            coords: None,
            lattice: None,
        };
        g.check_connected()?;
        Ok(g)
    }

    /// Rook-adjacency lattice with `rows * cols` nodes. Node `(r, c)`
    /// (0-based) has index `r * cols + c` and coordinate `(r+1, c+1)`.
    pub fn lattice(rows: usize, cols: usize) -> Result<Graph> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidGraph("lattice dimensions must be positive".into()));
        }
        if rows * cols < 2 {
            return Err(Error::InvalidGraph("lattice must have at least two nodes".into()));
        }
        let idx = |r: usize, c: usize| r * cols + c;
        let mut edges = Vec::with_capacity(rows * (cols - 1) + cols * (rows - 1));
        for r in 0..rows {
            for c in 0..cols {
                if c + 1 < cols {
                    edges.push((idx(r, c), idx(r, c + 1)));
                }
                if r + 1 < rows {
                    edges.push((idx(r, c), idx(r + 1, c)));
                }
            }
        }
        let mut g = Graph::build(rows * cols, &edges)?;
        g.coords = Some(
            (0..rows * cols)
                .map(|i| ((i / cols + 1) as f64, (i % cols + 1) as f64))
                .collect(),
        );
        g.lattice = Some((rows, cols));
        Ok(g)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Number of edges, `q`.
    pub fn q(&self) -> usize {
        self.edges.len()
    }

    /// Edges in canonical order; the index into this slice is the edge id.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn coords(&self) -> Option<&[(f64, f64)]> {
        self.coords.as_deref()
    }

    /// `(rows, cols)` when the graph was built by [`Graph::lattice`].
    pub fn lattice_dims(&self) -> Option<(usize, usize)> {
        self.lattice
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.p];
        for &(i, j) in &self.edges {
            deg[i] += 1;
            deg[j] += 1;
        }
        deg
    }

    /// Line graph L(G): one node per edge of `self`, adjacent when the
    /// underlying edges share an endpoint.
    pub fn line_graph(&self) -> Graph {
        let q = self.q();
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); self.p];
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            incident[i].push(e);
            incident[j].push(e);
        }
        let mut edges = Vec::new();
        for inc in &incident {
            for a in 0..inc.len() {
                for b in (a + 1)..inc.len() {
                    edges.push((inc[a], inc[b]));
                }
            }
        }
        // Two simple-graph edges share at most one endpoint, so no pair is
        // generated twice; q >= 1 and connectivity are inherited from self.
        Graph::build(q, &edges).expect("line graph of a connected graph is valid")
    }

    /// Dense weighted adjacency matrix W.
    pub fn adjacency(&self, w: &EdgeWeights) -> Result<Array2<f64>> {
        self.check_weights(w)?;
        let mut a = Array2::zeros((self.p, self.p));
        for (e, &(i, j)) in self.edges.iter().enumerate() {
            a[[i, j]] = w.values()[e];
            a[[j, i]] = w.values()[e];
        }
        Ok(a)
    }

    /// Content hash of the graph structure (node count plus canonical edge
    /// list), stable across runs; used to tie exported bases to the graph
    /// they were computed on.
    pub fn hash_hex(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.p.to_le_bytes());
        for &(i, j) in &self.edges {
            h.update(i.to_le_bytes());
            h.update(j.to_le_bytes());
        }
        let digest = h.finalize();
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub(crate) fn check_weights(&self, w: &EdgeWeights) -> Result<()> {
        if w.len() != self.q() {
            return Err(Error::dim("edge weights", self.q(), w.len()));
        }
        Ok(())
    }

    fn check_connected(&self) -> Result<()> {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); self.p];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; self.p];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        if let Some(unreached) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidGraph(format!(
                "graph is disconnected: no path between nodes 0 and {unreached}"
            )));
        }
        Ok(())
    }
}

/// Strictly positive weights, one per canonical edge.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights {
    w: Array1<f64>,
}

impl EdgeWeights {
    pub fn new(w: Array1<f64>) -> Result<EdgeWeights> {
        for (e, &v) in w.iter().enumerate() {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::InvalidValue(format!(
                    "edge weight at index {e} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(EdgeWeights { w })
    }

    pub fn uniform(q: usize, value: f64) -> Result<EdgeWeights> {
        EdgeWeights::new(Array1::from_elem(q, value))
    }

    pub fn len(&self) -> usize {
        self.w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.w.is_empty()
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.w
    }
}
