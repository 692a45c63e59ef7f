//! graphcov: edge-weight covariance models on graphs from the command
//! line. Subcommands build eigenbases, simulate fields, fit by maximum
//! likelihood, sample posteriors and run the experiment suite; every
//! command echoes its resolved configuration so `rerun` reproduces the
//! outputs exactly.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use graphcov::covariance::{CovarianceSpec, Family, Smoothness};
use graphcov::{Error, Result};

use config::{
    BasisConfig, ExperimentConfig, FigureName, FitConfig, FitFamily, GraphSource,
    InterceptPolicy, McmcConfig, PriorConfig, RunConfig, SimulateConfig, SimulateMode,
    StudyConfig, WeightPriorConfig, WeightsSpec,
};

#[derive(Parser)]
#[command(
    name = "graphcov",
    version,
    about = "Basis-parameterized edge-weight covariance models on graphs",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for replicate-level parallelism
    /// (default: $GRAPHCOV_JOBS, else 1).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the line-graph Laplacian eigenbasis and export it.
    Basis(BasisArgs),
    /// Sample from a covariance model, or reproduce a figure preset.
    Simulate(SimulateArgs),
    /// Fit a covariance model by Fisher-scoring maximum likelihood.
    Fit(FitArgs),
    /// Sample the posterior over covariance parameters with MALA.
    Mcmc(McmcArgs),
    /// Run a named study from the simulation and application suite.
    Experiment(ExperimentArgs),
    /// Repeat a previous run from its echoed config.json.
    Rerun(RerunArgs),
}

/// Graph source flags shared by most commands; exactly one must be given.
#[derive(Args)]
#[group(multiple = false)]
struct GraphArgs {
    /// Regular grid graph, e.g. 30x30.
    #[arg(long, value_name = "RxC", value_parser = parse_lattice)]
    lattice: Option<(usize, usize)>,
    /// Edge-list CSV with header i,j or i,j,w.
    #[arg(long, value_name = "FILE")]
    edges: Option<String>,
}

impl GraphArgs {
    fn source(&self) -> Result<GraphSource> {
        match (&self.lattice, &self.edges) {
            (Some((rows, cols)), None) => Ok(GraphSource::Lattice {
                rows: *rows,
                cols: *cols,
            }),
            (None, Some(path)) => Ok(GraphSource::Edges { path: path.clone() }),
            _ => Err(Error::InvalidValue(
                "a graph is required: pass --lattice RxC or --edges FILE".into(),
            )),
        }
    }
}

fn parse_lattice(s: &str) -> std::result::Result<(usize, usize), String> {
    let (r, c) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected ROWSxCOLS, got '{s}'"))?;
    let rows = r.trim().parse().map_err(|_| format!("bad row count '{r}'"))?;
    let cols = c.trim().parse().map_err(|_| format!("bad column count '{c}'"))?;
    Ok((rows, cols))
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse::<Family>().map_err(|e| e.to_string())
}

fn parse_nu(s: &str) -> std::result::Result<Smoothness, String> {
    s.parse::<Smoothness>().map_err(|e| e.to_string())
}

#[derive(Args)]
struct BasisArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Number of basis columns (smallest-eigenvalue eigenvectors).
    #[arg(short, long)]
    k: usize,
    /// Edge covariate CSV (dense q x r); the basis is orthogonalized
    /// against its columns and the combined design is exported.
    #[arg(long, value_name = "FILE")]
    covariates: Option<String>,
    #[arg(short, long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    graph: GraphArgs,
    /// Covariance family: gdef, car or icar.
    #[arg(long, value_parser = parse_family, conflicts_with = "figure")]
    family: Option<Family>,
    /// GDEF smoothness: 0.5, 1.5, 2.5 or inf.
    #[arg(long, value_parser = parse_nu, default_value = "1.5")]
    nu: Smoothness,
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// CAR spatial correlation (|kappa| < 1); also feeds the CAR panels
    /// of figure presets.
    #[arg(long, default_value_t = 0.9)]
    kappa: f64,
    /// Nugget variance.
    #[arg(long, default_value_t = 0.0)]
    tau2: f64,
    /// Mean level added to every draw.
    #[arg(long, default_value_t = 0.0)]
    beta0: f64,
    /// Give every edge this weight.
    #[arg(long, value_name = "W", conflicts_with_all = ["eta", "eta_file"])]
    uniform_weight: Option<f64>,
    /// Basis coefficients eta (weights w = exp(V^k eta), k = len).
    #[arg(long, value_delimiter = ',', num_args = 1.., conflicts_with = "eta_file")]
    eta: Option<Vec<f64>>,
    /// Read eta from a file of comma- or line-separated values.
    #[arg(long, value_name = "FILE")]
    eta_file: Option<String>,
    /// Replicates (rows of the sample matrix).
    #[arg(short, long, default_value_t = 1)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reproduce a named figure preset instead of a single sample.
    #[arg(long, value_enum)]
    figure: Option<FigureName>,
    #[arg(short, long, value_name = "DIR")]
    out: PathBuf,
}

impl SimulateArgs {
    fn into_config(self) -> Result<SimulateConfig> {
        if let Some(name) = self.figure {
            return Ok(SimulateConfig {
                seed: self.seed,
                mode: SimulateMode::Figure {
                    name,
                    kappa: self.kappa,
                },
            });
        }
        let family = self.family.ok_or_else(|| {
            Error::InvalidValue("--family is required unless --figure is given".into())
        })?;
        let spec = match family {
            Family::Gdef => CovarianceSpec::gdef(self.nu, self.sigma2),
            Family::Car => CovarianceSpec::car(self.sigma2, self.kappa),
            Family::Icar => {
                let mut s = CovarianceSpec::icar();
                s.sigma2 = self.sigma2;
                s
            }
        }
        .with_nugget(self.tau2)
        .with_mean(self.beta0);
        let weights = if let Some(value) = self.uniform_weight {
            WeightsSpec::Uniform { value }
        } else if let Some(coefficients) = self.eta {
            WeightsSpec::Basis { coefficients }
        } else if let Some(path) = &self.eta_file {
            // resolved inline so the config echo stands on its own
            WeightsSpec::Basis {
                coefficients: read_number_list(Path::new(path))?,
            }
        } else {
            WeightsSpec::Uniform { value: 1.0 }
        };
        Ok(SimulateConfig {
            seed: self.seed,
            mode: SimulateMode::Single {
                graph: self.graph.source()?,
                spec,
                weights,
                n: self.n,
            },
        })
    }
}

fn read_number_list(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)?;
    let mut values = Vec::new();
    for tok in text.split([',', '\n', '\r', ' ', '\t']) {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        values.push(tok.parse::<f64>().map_err(|_| Error::Parse {
            path: path.display().to_string(),
            msg: format!("bad number '{tok}'"),
        })?);
    }
    if values.is_empty() {
        return Err(Error::Parse {
            path: path.display().to_string(),
            msg: "no values found".into(),
        });
    }
    Ok(values)
}

#[derive(Args)]
struct ModelArgs {
    /// Data CSV: n x p replicate rows, or a lattice grid with --grid-data.
    #[arg(long, value_name = "FILE")]
    data: String,
    /// Treat the data file as a rows x cols grid of one value per node.
    #[arg(long)]
    grid_data: bool,
    #[command(flatten)]
    graph: GraphArgs,
    /// Model family: gdef or car.
    #[arg(long, value_enum, default_value = "gdef")]
    family: FitFamily,
    /// GDEF smoothness: 0.5, 1.5, 2.5 or inf.
    #[arg(long, value_parser = parse_nu, default_value = "1.5")]
    nu: Smoothness,
    /// Number of eigenbasis columns in the weight design.
    #[arg(short, long)]
    k: usize,
    /// Fix eta_1 = 0 (drop the constant basis column).
    #[arg(long, conflicts_with = "rowcol_intercept")]
    fix_intercept: bool,
    /// Replace the constant column by within-row / within-column edge
    /// indicators (lattices only).
    #[arg(long)]
    rowcol_intercept: bool,
    /// Estimate a nugget variance tau^2.
    #[arg(long)]
    nugget: bool,
    /// Estimate a constant mean beta_0.
    #[arg(long)]
    estimate_mean: bool,
    /// Hold sigma^2 at this value instead of estimating it.
    #[arg(long, value_name = "V")]
    fix_sigma2: Option<f64>,
}

impl ModelArgs {
    fn intercept(&self) -> InterceptPolicy {
        if self.rowcol_intercept {
            InterceptPolicy::Rowcol
        } else if self.fix_intercept {
            InterceptPolicy::Fixed
        } else {
            InterceptPolicy::Free
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Edge covariate CSV entering the weight design.
    #[arg(long, value_name = "FILE")]
    covariates: Option<String>,
    /// Fisher scoring step scale.
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Exit 0 even when the fit hits the divergence guard.
    #[arg(long)]
    allow_diverged: bool,
    #[arg(short, long, value_name = "DIR")]
    out: PathBuf,
}

impl FitArgs {
    fn into_config(self) -> Result<FitConfig> {
        Ok(FitConfig {
            data: self.model.data.clone(),
            grid_data: self.model.grid_data,
            graph: self.model.graph.source()?,
            family: self.model.family,
            nu: self.model.nu,
            k: self.model.k,
            covariates: self.covariates,
            intercept: self.model.intercept(),
            nugget: self.model.nugget,
            estimate_mean: self.model.estimate_mean,
            fix_sigma2: self.model.fix_sigma2,
            gamma: self.gamma,
            max_iter: self.max_iter,
            allow_diverged: self.allow_diverged,
        })
    }
}

#[derive(Args)]
struct McmcArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Post-burn-in iterations.
    #[arg(short = 'T', long, default_value_t = 2000)]
    iterations: usize,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    /// Initial MALA step size h.
    #[arg(long, default_value_t = 0.1)]
    step: f64,
    /// Tune the step toward the MALA target acceptance during burn-in
    /// (the default).
    #[arg(long, overrides_with = "no_adapt")]
    adapt: bool,
    /// Keep the step size fixed.
    #[arg(long)]
    no_adapt: bool,
    /// Keep every thin-th draw.
    #[arg(long, default_value_t = 1)]
    thin: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Prior on weight coefficients: normal-hyper:A,B (N(0, phi) with
    /// phi ~ InvGamma(A, B)), normal:PHI, gamma:SHAPE,RATE or flat.
    #[arg(long, default_value = "normal-hyper:2,1")]
    weight_prior: String,
    /// InvGamma(A, B) prior on sigma^2, or "flat".
    #[arg(long, default_value = "2,1", value_name = "A,B")]
    sigma2_prior: String,
    /// Beta(A, B) prior on (kappa + 1)/2, or "flat".
    #[arg(long, default_value = "1,1", value_name = "A,B")]
    kappa_prior: String,
    /// InvGamma(A, B) prior on tau^2, or "flat".
    #[arg(long, default_value = "2,0.2", value_name = "A,B")]
    tau2_prior: String,
    #[arg(short, long, value_name = "DIR")]
    out: PathBuf,
}

fn parse_pair(what: &str, s: &str) -> Result<Option<(f64, f64)>> {
    if s.eq_ignore_ascii_case("flat") {
        return Ok(None);
    }
    let bad = || Error::InvalidValue(format!("{what}: expected A,B or 'flat', got '{s}'"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    let a = a.trim().parse().map_err(|_| bad())?;
    let b = b.trim().parse().map_err(|_| bad())?;
    Ok(Some((a, b)))
}

fn parse_weight_prior(s: &str) -> Result<WeightPriorConfig> {
    if s.eq_ignore_ascii_case("flat") {
        return Ok(WeightPriorConfig::Flat);
    }
    let bad = || {
        Error::InvalidValue(format!(
            "weight_prior: expected normal-hyper:A,B, normal:PHI, gamma:SHAPE,RATE or flat, got '{s}'"
        ))
    };
    let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
    match kind {
        "normal-hyper" => {
            let (a, b) = parse_pair("weight_prior", rest)?.ok_or_else(bad)?;
            Ok(WeightPriorConfig::NormalHyper { a, b })
        }
        "normal" => {
            let phi = rest.trim().parse().map_err(|_| bad())?;
            Ok(WeightPriorConfig::Normal { phi })
        }
        "gamma" => {
            let (shape, rate) = parse_pair("weight_prior", rest)?.ok_or_else(bad)?;
            Ok(WeightPriorConfig::Gamma { shape, rate })
        }
        _ => Err(bad()),
    }
}

impl McmcArgs {
    fn into_config(self) -> Result<McmcConfig> {
        let prior = PriorConfig {
            weights: parse_weight_prior(&self.weight_prior)?,
            sigma2: parse_pair("sigma2_prior", &self.sigma2_prior)?,
            kappa: parse_pair("kappa_prior", &self.kappa_prior)?,
            tau2: parse_pair("tau2_prior", &self.tau2_prior)?,
        };
        Ok(McmcConfig {
            data: self.model.data.clone(),
            grid_data: self.model.grid_data,
            graph: self.model.graph.source()?,
            family: self.model.family,
            nu: self.model.nu,
            k: self.model.k,
            intercept: self.model.intercept(),
            nugget: self.model.nugget,
            estimate_mean: self.model.estimate_mean,
            fix_sigma2: self.model.fix_sigma2,
            prior,
            iterations: self.iterations,
            burn_in: self.burn_in,
            step: self.step,
            adapt: !self.no_adapt,
            thin: self.thin,
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum StudyName {
    Sim1,
    Sim2,
    Sim3,
    Wheat,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Which study to run.
    #[arg(value_enum)]
    name: StudyName,
    /// Node counts (perfect squares), comma separated; one output cell
    /// per combination.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    p: Option<Vec<usize>>,
    /// Basis sizes (sim1), comma separated.
    #[arg(short, long, value_delimiter = ',', num_args = 1..)]
    k: Option<Vec<usize>>,
    /// Replicate counts per dataset, comma separated.
    #[arg(short, long, value_delimiter = ',', num_args = 1..)]
    n: Option<Vec<usize>>,
    /// Candidate basis sizes for selection (sim2).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    k_grid: Option<Vec<usize>>,
    /// Candidate models (sim3): gdef32, gdefinf, matern52, car.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    models: Option<Vec<String>>,
    /// Monte Carlo repetitions.
    #[arg(long)]
    replicates: Option<usize>,
    /// Grid deformation strength (sim3).
    #[arg(long)]
    strength: Option<f64>,
    /// Yield grid CSV (wheat).
    #[arg(long, value_name = "FILE")]
    data: Option<String>,
    /// Paper-scale settings instead of the quick defaults; explicit
    /// flags still override.
    #[arg(long)]
    full: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(short, long, value_name = "DIR")]
    out: PathBuf,
}

impl ExperimentArgs {
    fn into_config(self) -> Result<ExperimentConfig> {
        let full = self.full;
        let study = match self.name {
            StudyName::Sim1 => StudyConfig::Sim1 {
                p: self
                    .p
                    .unwrap_or_else(|| if full { vec![100, 400] } else { vec![400] }),
                k: self
                    .k
                    .unwrap_or_else(|| if full { vec![10, 30] } else { vec![10] }),
                n: self
                    .n
                    .unwrap_or_else(|| if full { vec![1, 10, 50] } else { vec![10] }),
                replicates: self.replicates.unwrap_or(10),
            },
            StudyName::Sim2 => StudyConfig::Sim2 {
                p: self
                    .p
                    .unwrap_or_else(|| if full { vec![100, 400] } else { vec![100] }),
                n: self
                    .n
                    .unwrap_or_else(|| if full { vec![1, 10, 50] } else { vec![1] }),
                k_grid: self.k_grid.unwrap_or_else(|| {
                    if full {
                        (1..=10).map(|i| 10 * i).collect()
                    } else {
                        vec![10, 20, 30]
                    }
                }),
                replicates: self.replicates.unwrap_or(10),
            },
            StudyName::Sim3 => {
                let p = match self.p.as_deref() {
                    None => 225,
                    Some([p]) => *p,
                    Some(_) => {
                        return Err(Error::InvalidValue(
                            "sim3 runs one lattice; pass a single --p".into(),
                        ))
                    }
                };
                let side = config::square_side(p)?;
                StudyConfig::Sim3 {
                    rows: side,
                    cols: side,
                    n_list: self.n.unwrap_or_else(|| {
                        if full {
                            vec![1, 2, 3, 5, 10, 25, 50]
                        } else {
                            vec![1, 5, 25]
                        }
                    }),
                    models: self.models.unwrap_or_else(|| {
                        if full {
                            vec!["gdef32".into(), "gdefinf".into(), "matern52".into(), "car".into()]
                        } else {
                            vec!["gdef32".into(), "matern52".into(), "car".into()]
                        }
                    }),
                    replicates: self.replicates.unwrap_or(if full { 125 } else { 20 }),
                    strength: self.strength.unwrap_or(2.0),
                }
            }
            StudyName::Wheat => StudyConfig::Wheat {
                data: self.data.ok_or_else(|| {
                    Error::InvalidValue("the wheat study needs --data FILE (yield grid CSV)".into())
                })?,
            },
        };
        Ok(ExperimentConfig {
            seed: self.seed,
            study,
        })
    }
}

#[derive(Args)]
struct RerunArgs {
    /// A config.json echoed by a previous run.
    config: PathBuf,
    #[arg(short, long, value_name = "DIR")]
    out: PathBuf,
}

fn dispatch(config: &RunConfig, out: &Path) -> Result<()> {
    match config {
        RunConfig::Basis(c) => commands::basis::run(c, out),
        RunConfig::Simulate(c) => commands::simulate::run(c, out),
        RunConfig::Fit(c) => commands::fit::run(c, out),
        RunConfig::Mcmc(c) => commands::mcmc::run(c, out),
        RunConfig::Experiment(c) => commands::experiment::run(c, out),
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Basis(args) => {
            let cfg = BasisConfig {
                graph: args.graph.source()?,
                k: args.k,
                covariates: args.covariates,
            };
            dispatch(&RunConfig::Basis(cfg), &args.out)
        }
        Command::Simulate(args) => {
            let out = args.out.clone();
            dispatch(&RunConfig::Simulate(args.into_config()?), &out)
        }
        Command::Fit(args) => {
            let out = args.out.clone();
            dispatch(&RunConfig::Fit(args.into_config()?), &out)
        }
        Command::Mcmc(args) => {
            let out = args.out.clone();
            dispatch(&RunConfig::Mcmc(args.into_config()?), &out)
        }
        Command::Experiment(args) => {
            let out = args.out.clone();
            dispatch(&RunConfig::Experiment(args.into_config()?), &out)
        }
        Command::Rerun(args) => {
            let text = std::fs::read_to_string(&args.config)?;
            let config: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: args.config.display().to_string(),
                msg: e.to_string(),
            })?;
            dispatch(&config, &args.out)
        }
    }
}

extern "C" {
    fn openblas_set_num_threads(num: std::os::raw::c_int);
}

fn main() -> ExitCode {
    // BLAS threading reorders reductions run to run; results must not
    // depend on the host's core count.
    unsafe { openblas_set_num_threads(1) };

    let cli = Cli::parse();
    let jobs = cli
        .jobs
        .or_else(|| {
            std::env::var("GRAPHCOV_JOBS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .unwrap_or(1)
        .max(1);
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .ok();

    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
