//! Resolved run configurations, echoed next to every command's outputs as
//! config.json. A config holds everything the run depends on, defaults
//! included, so `graphcov rerun config.json` reproduces the outputs byte
//! for byte. Output locations and job counts stay out: they do not affect
//! the results.

use std::path::Path;

use serde::{Deserialize, Serialize};

use graphcov::covariance::{CovarianceSpec, Smoothness};
use graphcov::{Error, Graph, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case", deny_unknown_fields)]
pub enum RunConfig {
    Basis(BasisConfig),
    Simulate(SimulateConfig),
    Fit(FitConfig),
    Mcmc(McmcConfig),
    Experiment(ExperimentConfig),
}

/// Where the graph comes from; edge-list paths are kept verbatim so a
/// rerun reads the same file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    Lattice { rows: usize, cols: usize },
    Edges { path: String },
}

impl GraphSource {
    pub fn load(&self) -> Result<Graph> {
        match self {
            GraphSource::Lattice { rows, cols } => Graph::lattice(*rows, *cols),
            GraphSource::Edges { path } => {
                Ok(graphcov::io::read_edge_list_csv(Path::new(path))?.0)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisConfig {
    pub graph: GraphSource,
    pub k: usize,
    /// Optional dense q x r CSV of extra edge covariates; exports the
    /// combined weight design alongside the basis.
    pub covariates: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub mode: SimulateMode,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SimulateMode {
    /// One covariance, n replicate rows, written as a dense sample matrix.
    Single {
        graph: GraphSource,
        spec: CovarianceSpec,
        weights: WeightsSpec,
        n: usize,
    },
    /// A named multi-panel preset; each panel is one draw written as a
    /// tidy node field. `kappa` feeds the CAR panels.
    Figure { name: FigureName, kappa: f64 },
}

/// Edge weights for simulation: one shared value, or basis coefficients
/// eta with w = exp(V^k eta). Coefficients are stored inline so the echo
/// is self-contained.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightsSpec {
    Uniform { value: f64 },
    Basis { coefficients: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FigureName {
    /// CAR, ICAR and GDEF draws over a 30x30 grid at three uniform weights.
    Covcomp,
    /// ICAR draws at three grid resolutions.
    Icarres,
    /// Two-basis-function weights (eta = 50, 50) under three models.
    Covcomp2,
    /// A four-eigenvector weight combination under the squared-exponential
    /// GDEF model.
    Example,
}

impl FigureName {
    pub fn as_str(&self) -> &'static str {
        match self {
            FigureName::Covcomp => "covcomp",
            FigureName::Icarres => "icarres",
            FigureName::Covcomp2 => "covcomp2",
            FigureName::Example => "example",
        }
    }
}

/// How the constant eigenvector is treated in the weight design.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InterceptPolicy {
    /// Keep the constant column with a free coefficient eta_1.
    Free,
    /// Drop the constant column, fixing eta_1 = 0; recommended for CAR
    /// models with free sigma^2, where the overall weight scale is
    /// redundant.
    Fixed,
    /// Replace the constant column by within-row and within-column edge
    /// indicators (lattices only).
    Rowcol,
}

/// Which family a fit runs; ICAR is a sampling-only structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    Gdef,
    Car,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub data: String,
    /// Treat the data CSV as one value per lattice node (rows x cols grid,
    /// a single replicate) instead of replicate rows.
    pub grid_data: bool,
    pub graph: GraphSource,
    pub family: FitFamily,
    pub nu: Smoothness,
    pub k: usize,
    pub covariates: Option<String>,
    pub intercept: InterceptPolicy,
    pub nugget: bool,
    pub estimate_mean: bool,
    /// Hold sigma^2 at this value instead of estimating it.
    pub fix_sigma2: Option<f64>,
    /// Step scale gamma for Fisher scoring.
    pub gamma: f64,
    pub max_iter: usize,
    pub allow_diverged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McmcConfig {
    pub data: String,
    pub grid_data: bool,
    pub graph: GraphSource,
    pub family: FitFamily,
    pub nu: Smoothness,
    pub k: usize,
    pub intercept: InterceptPolicy,
    pub nugget: bool,
    pub estimate_mean: bool,
    pub fix_sigma2: Option<f64>,
    pub prior: PriorConfig,
    pub iterations: usize,
    pub burn_in: usize,
    pub step: f64,
    pub adapt: bool,
    pub thin: usize,
    pub seed: u64,
}

/// Serializable mirror of the sampler's prior specification.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub weights: WeightPriorConfig,
    pub sigma2: Option<(f64, f64)>,
    pub kappa: Option<(f64, f64)>,
    pub tau2: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WeightPriorConfig {
    NormalHyper { a: f64, b: f64 },
    Normal { phi: f64 },
    Gamma { shape: f64, rate: f64 },
    Flat,
}

impl PriorConfig {
    pub fn to_prior(&self) -> graphcov::inference::MalaPrior {
        use graphcov::inference::{MalaPrior, WeightPrior};
        MalaPrior {
            weights: match self.weights {
                WeightPriorConfig::NormalHyper { a, b } => WeightPrior::NormalHyper { a, b },
                WeightPriorConfig::Normal { phi } => WeightPrior::Normal { phi },
                WeightPriorConfig::Gamma { shape, rate } => WeightPrior::Gamma { shape, rate },
                WeightPriorConfig::Flat => WeightPrior::Flat,
            },
            sigma2: self.sigma2,
            kappa: self.kappa,
            tau2: self.tau2,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(flatten)]
    pub study: StudyConfig,
}

/// One experiment invocation; list-valued fields run the cross product of
/// cells, each in its own subdirectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "study", rename_all = "snake_case", deny_unknown_fields)]
pub enum StudyConfig {
    Sim1 {
        p: Vec<usize>,
        k: Vec<usize>,
        n: Vec<usize>,
        replicates: usize,
    },
    Sim2 {
        p: Vec<usize>,
        n: Vec<usize>,
        k_grid: Vec<usize>,
        replicates: usize,
    },
    Sim3 {
        rows: usize,
        cols: usize,
        n_list: Vec<usize>,
        models: Vec<String>,
        replicates: usize,
        strength: f64,
    },
    Wheat {
        data: String,
    },
}

/// Side length of a square lattice with `p` nodes.
pub fn square_side(p: usize) -> Result<usize> {
    let side = (p as f64).sqrt().round() as usize;
    if side * side != p || side < 2 {
        return Err(Error::InvalidValue(format!(
            "p must be a perfect square >= 4 to define a square lattice, got {p}"
        )));
    }
    Ok(side)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_round_trips() {
        let cfg = RunConfig::Experiment(ExperimentConfig {
            seed: 9,
            study: StudyConfig::Sim1 {
                p: vec![400],
                k: vec![10],
                n: vec![10],
                replicates: 10,
            },
        });
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(text, serde_json::to_string_pretty(&back).unwrap());
        assert!(text.contains("\"command\": \"experiment\""));
        assert!(text.contains("\"study\": \"sim1\""));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"command":"basis","graph":{"lattice":{"rows":3,"cols":3}},"k":2,"covariates":null,"bogus":1}"#;
        assert!(serde_json::from_str::<RunConfig>(text).is_err());
    }

    #[test]
    fn square_side_checks_squareness() {
        assert_eq!(square_side(400).unwrap(), 20);
        assert!(square_side(401).is_err());
        assert!(square_side(1).is_err());
    }
}
