use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gamma_glm::pipeline::Optimizer;
use gamma_glm::ModelFamily;

#[derive(Debug, Parser)]
#[command(name = "gamma-glm", version, about = "Robust sparse GLMs under the gamma-divergence")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a contaminated linear-regression dataset.
    Simulate(SimulateArgs),
    /// Fit one model and write it to a key = value file.
    Fit(FitArgs),
    /// Choose lambda from a grid by robust cross-validation.
    Cv(CvArgs),
    /// Score a fitted model on a dataset.
    Evaluate(EvaluateArgs),
    /// Rerun a command from its manifest.
    Replay(ReplayArgs),
}

pub fn parse_family(s: &str) -> Result<ModelFamily, String> {
    s.parse().map_err(|e: gamma_glm::Error| e.to_string())
}

pub fn parse_optimizer(s: &str) -> Result<Optimizer, String> {
    s.parse().map_err(|e: gamma_glm::Error| e.to_string())
}

fn positive(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v > 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("expected a positive number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn nonnegative(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Ok(v) => Err(format!("expected a nonnegative number, got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn fraction(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if (0.0..1.0).contains(&v) => Ok(v),
        Ok(v) => Err(format!("expected a value in [0, 1), got {v}")),
        Err(e) => Err(e.to_string()),
    }
}

fn count(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("expected a positive integer".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

impl std::fmt::Display for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

fn grid(s: &str) -> Result<Grid, String> {
    s.split(',')
        .map(|v| nonnegative(v.trim()))
        .collect::<Result<Vec<_>, _>>()
        .map(Grid)
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = parse_family, default_value = "linear")]
    pub family: ModelFamily,
    #[arg(long, value_parser = count)]
    pub n: usize,
    #[arg(long, value_parser = count)]
    pub p: usize,
    /// Contamination fraction.
    #[arg(long, value_parser = fraction, default_value_t = 0.2)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV output; the truth sidecar goes to `<out>.truth`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

/// Where the data lives and how its columns map onto the model.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, value_parser = parse_family)]
    pub family: ModelFamily,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub response: String,
    /// Offset column, added to the linear predictor with coefficient 1.
    #[arg(long)]
    pub offset: Option<String>,
    /// Take the log of the offset column (exposure to log-exposure).
    #[arg(long)]
    pub log_offset: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, value_parser = positive, default_value_t = 0.1)]
    pub gamma: f64,
    #[arg(long, value_parser = parse_optimizer, default_value = "2rspg")]
    pub optimizer: Optimizer,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Pilot rows for the start point and the smoothness estimates.
    #[arg(long, value_parser = count, default_value_t = 200)]
    pub n_init: usize,
    /// Sample budget of the optimizer; defaults to the number of rows.
    #[arg(long, value_parser = count)]
    pub n_total: Option<usize>,
    #[arg(long, value_parser = positive, default_value_t = 1.0)]
    pub d_tilde: f64,
    /// Known lower bound of the regularized risk; replaces --d-tilde.
    #[arg(long, allow_negative_numbers = true)]
    pub psi_star: Option<f64>,
    #[arg(long, value_parser = count, default_value_t = 5)]
    pub n_cand: usize,
    /// Post-optimization samples; defaults to a tenth of the budget.
    #[arg(long, value_parser = count)]
    pub n_post: Option<usize>,
    #[arg(long, value_parser = count, default_value_t = 100)]
    pub ransac_trials: usize,
    #[arg(long, value_parser = count)]
    pub ransac_subset: Option<usize>,
    #[arg(long, value_parser = positive)]
    pub ransac_threshold: Option<f64>,
    #[arg(long, default_value_t = 3)]
    pub ransac_refine: usize,
    /// SD of the noise added to the RANSAC start.
    #[arg(long, value_parser = nonnegative, default_value_t = 0.0)]
    pub ransac_noise: f64,
    #[arg(long, value_parser = count, default_value_t = 20)]
    pub probes: usize,
    #[arg(long, value_parser = positive, default_value_t = 0.1)]
    pub probe_radius: f64,
    /// Initial SGD step; defaults to 1/(2L).
    #[arg(long, value_parser = positive)]
    pub sgd_eta0: Option<f64>,
    #[arg(long, value_parser = count, default_value_t = 10)]
    pub sgd_batch: usize,
    #[arg(long, value_parser = count, default_value_t = 500)]
    pub mm_max_iter: usize,
    #[arg(long, value_parser = positive, default_value_t = 1e-8)]
    pub mm_tol: f64,
    #[arg(long, value_parser = positive, default_value_t = 1e-12)]
    pub series_tol: f64,
    #[arg(long, value_parser = count, default_value_t = 10_000)]
    pub series_max_terms: usize,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, value_parser = nonnegative, default_value_t = 1e-2)]
    pub lambda: f64,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Manifest path; defaults to `<out>.manifest`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Comma separated lambda values.
    #[arg(long, value_parser = grid, default_value = "1e-1,1e-2,1e-3")]
    pub grid: Grid,
    /// Kernel exponent used to score held-out rows.
    #[arg(long, value_parser = positive, default_value_t = 1.0)]
    pub gamma0: f64,
    #[arg(long, value_parser = count, default_value_t = 5)]
    pub folds: usize,
    /// Optional key = value copy of the results.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Emprisk,
    Exprisk,
    Rtmspe,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    #[arg(long, value_enum, default_value = "exprisk")]
    pub metric: Metric,
    /// Trim fraction for rtmspe.
    #[arg(long, value_parser = fraction, default_value_t = 0.05)]
    pub trim: f64,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write the primary output here instead of the recorded path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
