//! Edge-weight covariance models on graphs.
//!
//! This crate implements two families of Gaussian models for areal data
//! indexed by the nodes of a connected graph, both parameterized by positive
//! edge weights:
//!
//! * conditional autoregressive (CAR) models, with precision
//!   `(diag(W 1) - kappa W) / sigma^2`, and their intrinsic (ICAR) limit;
//! * graph deformation (GDEF) models, where a Matern correlation is applied
//!   to quasi-Euclidean distances derived from the squared pseudoinverse of
//!   the weighted graph Laplacian.
//!
//! Edge weights are expressed through a low-dimensional basis of line-graph
//! Laplacian eigenvectors, optionally combined with edge covariates, so the
//! weight field is smooth over the graph and estimable from data. On top of
//! that sit maximum-likelihood fitting by Fisher scoring, Wald intervals,
//! information criteria, conditional smoothing, Langevin MCMC, and a
//! reproducible experiment harness.

pub mod basis;
pub mod covariance;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod inference;
pub mod io;
pub mod linalg;
pub mod metric;
pub mod seed;

pub use error::{Error, Result};
pub use graph::{EdgeWeights, Graph};
