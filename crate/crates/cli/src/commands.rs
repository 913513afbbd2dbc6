use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use gamma_glm::data::io::truth_document;
use gamma_glm::data::{load_csv, poisson_predictions, rtmspe, simulate_linear, write_csv, CsvSchema, Dataset, SimSpec};
use gamma_glm::kv::KvDocument;
use gamma_glm::mm::MmConfig;
use gamma_glm::objective::risk_with;
use gamma_glm::optim::{DTilde, ProbeConfig, StepSchedule};
use gamma_glm::pipeline::{fit, FitSettings};
use gamma_glm::select::{rocv_select, RansacConfig, RocvConfig};
use gamma_glm::series::SeriesTolerance;
use gamma_glm::{Error, GammaLoss, ModelFamily};
use log::info;

use crate::args::{Cli, Command, CvArgs, DataArgs, EvaluateArgs, FitArgs, Metric, ReplayArgs, SimulateArgs, SolverArgs};
use crate::manifest::{self, Flags};
use crate::model;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) if e.is_numerical() => write!(f, "numerical failure: {e}"),
            CliError::Core(e) => write!(f, "data error: {e}"),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Lines written to stdout.
pub type Output = Vec<String>;

pub fn run(command: Command) -> CliResult<Output> {
    match command {
        Command::Simulate(a) => simulate(&a),
        Command::Fit(a) => fit_command(&a),
        Command::Cv(a) => cv(&a),
        Command::Evaluate(a) => evaluate(&a),
        Command::Replay(a) => replay(&a),
    }
}

fn write_manifest(path: &Path, command: &str, flags: &Flags, started: Instant) -> CliResult<()> {
    let elapsed = started.elapsed().as_secs_f64();
    info!("{command} finished in {elapsed:.3}s");
    manifest::document(command, flags, elapsed).write(path)?;
    Ok(())
}

fn sidecar(path: &Path, extension: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(extension);
    PathBuf::from(s)
}

fn simulate(a: &SimulateArgs) -> CliResult<Output> {
    let started = Instant::now();
    if a.family != ModelFamily::Linear {
        return Err(CliError::Usage(format!(
            "simulate supports the linear family only, got {}",
            a.family
        )));
    }
    let spec = SimSpec::linear(a.n, a.p, a.eps, a.seed);
    let sim = simulate_linear(&spec)?;
    write_csv(&a.out, &sim.data)?;
    let truth_path = sidecar(&a.out, "truth");
    truth_document(&spec, &sim).write(&truth_path)?;
    if let Some(m) = &a.manifest {
        write_manifest(m, "simulate", &manifest::simulate_flags(a), started)?;
    }
    Ok(vec![
        format!("data = {}", a.out.display()),
        format!("truth = {}", truth_path.display()),
        format!("contaminated = {}", sim.contaminated.len()),
    ])
}

fn load(d: &DataArgs) -> CliResult<Dataset> {
    let mut schema = CsvSchema::response(&d.response);
    if let Some(col) = &d.offset {
        schema = schema.with_offset(col, d.log_offset);
    } else if d.log_offset {
        return Err(CliError::Usage("--log-offset needs --offset".into()));
    }
    Ok(load_csv(&d.data, d.family, &schema)?)
}

/// Settings for the pipeline, with the sample budget and post-sample count
/// resolved against the data size.
fn settings(s: &SolverArgs, lambda: f64, n: usize) -> CliResult<(FitSettings, usize, usize)> {
    let n_total = s.n_total.unwrap_or(n);
    let n_post = s.n_post.unwrap_or_else(|| n_total.div_ceil(10)).max(1);
    let series = SeriesTolerance::new(s.series_tol, s.series_max_terms).map_err(|e| CliError::Usage(e.to_string()))?;
    let settings = FitSettings {
        gamma: s.gamma,
        lambda,
        optimizer: s.optimizer,
        seed: s.seed,
        n_init: s.n_init,
        n_total: Some(n_total),
        d_tilde: match s.psi_star {
            Some(psi_star) => DTilde::FromOptimum { psi_star },
            None => DTilde::Fixed(s.d_tilde),
        },
        n_cand: s.n_cand,
        n_post: Some(n_post),
        ransac: RansacConfig {
            n_trials: s.ransac_trials,
            subset_size: s.ransac_subset,
            inlier_threshold: s.ransac_threshold,
            refine_rounds: s.ransac_refine,
            noise_scale: s.ransac_noise,
            seed: 0,
        },
        probe: ProbeConfig {
            n_probe: s.probes,
            radius: s.probe_radius,
            seed: 0,
        },
        sgd: StepSchedule {
            eta0: s.sgd_eta0,
            batch_size: s.sgd_batch,
        },
        mm: MmConfig {
            max_iter: s.mm_max_iter,
            tol: s.mm_tol,
        },
        series,
        init: None,
    };
    Ok((settings, n_total, n_post))
}

fn fit_command(a: &FitArgs) -> CliResult<Output> {
    let started = Instant::now();
    let data = load(&a.data)?;
    let (s, n_total, n_post) = settings(&a.solver, a.lambda, data.len())?;
    let result = fit(&data, &s)?;
    let flags = manifest::fit_flags(a, n_total, n_post);
    model::document(data.family(), &result, a.lambda, a.solver.gamma, &flags).write(&a.out)?;
    let manifest_path = a.manifest.clone().unwrap_or_else(|| sidecar(&a.out, "manifest"));
    write_manifest(&manifest_path, "fit", &flags, started)?;
    let r = &result.report;
    Ok(vec![
        format!("model = {}", a.out.display()),
        format!("emp_risk = {}", r.emp_risk),
        format!("pg_norm = {}", r.pg_norm),
        format!("stop_index = {}", r.stop_index),
        format!("nonzero = {}", r.theta.beta.iter().filter(|b| **b != 0.0).count()),
    ])
}

fn cv(a: &CvArgs) -> CliResult<Output> {
    let started = Instant::now();
    if a.grid.0.is_empty() {
        return Err(CliError::Usage("empty lambda grid".into()));
    }
    let data = load(&a.data)?;
    if a.folds < 2 || a.folds > data.len() {
        return Err(CliError::Usage(format!(
            "--folds must lie in [2, {}], got {}",
            data.len(),
            a.folds
        )));
    }
    let (s, n_total, n_post) = settings(&a.solver, a.grid.0[0], data.len())?;
    let cfg = RocvConfig {
        gamma0: a.gamma0,
        folds: a.folds,
        seed: a.solver.seed,
    };
    let result = rocv_select(&data, &a.grid.0, &s, &cfg)?;
    let mut doc = KvDocument::new();
    doc.set("lambda_star", result.lambda_star);
    doc.set_list("lambda", &a.grid.0);
    doc.set_list("rocv", &result.scores);
    if let Some(out) = &a.out {
        doc.write(out)?;
    }
    if let Some(m) = &a.manifest {
        write_manifest(m, "cv", &manifest::cv_flags(a, n_total, n_post), started)?;
    }
    let mut lines = vec![format!("lambda_star = {}", result.lambda_star)];
    lines.extend(
        a.grid
            .0
            .iter()
            .zip(&result.scores)
            .map(|(l, s)| format!("rocv[{l}] = {s}")),
    );
    Ok(lines)
}

fn evaluate(a: &EvaluateArgs) -> CliResult<Output> {
    let started = Instant::now();
    let m = model::read(&a.model)?;
    let test = load_csv(&a.test, m.family, &m.schema)?;
    if test.p() != m.theta.p() {
        return Err(CliError::Core(Error::InvalidInput(format!(
            "the model has {} covariates but the test data has {}",
            m.theta.p(),
            test.p()
        ))));
    }
    let line = match a.metric {
        Metric::Emprisk | Metric::Exprisk => {
            let loss = GammaLoss::new(m.family, m.gamma)?.with_series(m.series);
            let value = risk_with(&loss, &test, &m.theta, m.lambda)?.value;
            let name = if a.metric == Metric::Emprisk { "emp_risk" } else { "exp_risk" };
            format!("{name} = {value}")
        }
        Metric::Rtmspe => {
            if m.family != ModelFamily::Poisson {
                return Err(CliError::Usage(format!(
                    "rtmspe scores count predictions; the model family is {}",
                    m.family
                )));
            }
            let pred = poisson_predictions(&test, &m.theta);
            let truth: Vec<i64> = test.iter().map(|o| o.y as i64).collect();
            format!("rtmspe = {}", rtmspe(&pred, &truth, a.trim)?)
        }
    };
    if let Some(p) = &a.manifest {
        write_manifest(p, "evaluate", &manifest::evaluate_flags(a), started)?;
    }
    Ok(vec![line])
}

fn replay(a: &ReplayArgs) -> CliResult<Output> {
    let doc = KvDocument::read(&a.manifest)?;
    let (command, mut flags) = manifest::parse(&doc)?;
    if command == "replay" {
        return Err(CliError::Core(Error::InvalidInput("a manifest cannot replay itself".into())));
    }
    if let Some(out) = &a.out {
        flags.set("out", manifest::absolute(out).display());
    }
    let argv = flags.to_argv(&command);
    let cli = Cli::try_parse_from(&argv).map_err(|e| {
        CliError::Core(Error::InvalidInput(format!(
            "{}: not a valid manifest: {}",
            a.manifest.display(),
            e.to_string().lines().next().unwrap_or_default()
        )))
    })?;
    run(cli.command)
}
