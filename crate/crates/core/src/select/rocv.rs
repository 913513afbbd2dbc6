use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::{GammaLoss, Theta};
use crate::pipeline::{fit, FitSettings};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocvConfig {
    /// Kernel exponent used to score held-out rows.
    pub gamma0: f64,
    /// Number of folds; equal to the row count for leave-one-out.
    pub folds: usize,
    pub seed: u64,
}

impl Default for RocvConfig {
    fn default() -> Self {
        Self {
            gamma0: 1.0,
            folds: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocvResult {
    pub lambda_star: f64,
    /// One score per grid entry, `+∞` where a fold fit failed.
    pub scores: Vec<f64>,
}

/// Fold label of every row. Leave-one-out puts row `i` in fold `i`;
/// otherwise rows are shuffled with the seed and dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    if folds >= n {
        return (0..n).collect();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut label = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        label[i] = pos % folds;
    }
    label
}

/// Robust cross-validation scores with a caller-supplied fitter.
///
/// For each `λ`, every fold is fitted on the remaining rows (in canonical
/// row order, so the fit depends only on which rows it sees) and each
/// held-out row contributes `-K_{γ₀}(row; θ̂)`. The score is the mean over
/// all rows.
pub fn rocv_scores<F>(data: &Dataset, lambda_grid: &[f64], config: &RocvConfig, fitter: F) -> Result<Vec<f64>>
where
    F: Fn(&Dataset, f64) -> Result<Theta> + Sync,
{
    if lambda_grid.is_empty() {
        return Err(Error::Empty("lambda grid"));
    }
    if config.folds < 2 || config.folds > data.len() {
        return Err(Error::InvalidInput(format!(
            "folds must lie in [2, {}], got {}",
            data.len(),
            config.folds
        )));
    }
    let scorer = GammaLoss::new(data.family(), config.gamma0)?;
    let labels = fold_assignment(data.len(), config.folds, config.seed);
    let jobs: Vec<(usize, usize)> = (0..lambda_grid.len())
        .flat_map(|l| (0..config.folds).map(move |k| (l, k)))
        .collect();
    let partial: Vec<f64> = jobs
        .par_iter()
        .map(|&(l, k)| {
            let held: Vec<usize> = (0..data.len()).filter(|&i| labels[i] == k).collect();
            let train = data.without(&held).canonical();
            let lambda = lambda_grid[l];
            let outcome = fitter(&train, lambda).and_then(|theta| {
                held.iter()
                    .map(|&i| scorer.kernel(&data.rows()[i], &theta).map(|v| -v))
                    .sum::<Result<f64>>()
            });
            outcome.unwrap_or_else(|e| {
                warn!("fold {k} at lambda = {lambda} failed: {e}");
                f64::INFINITY
            })
        })
        .collect();
    Ok((0..lambda_grid.len())
        .map(|l| partial[l * config.folds..(l + 1) * config.folds].iter().sum::<f64>() / data.len() as f64)
        .collect())
}

/// Index of the smallest score; ties go to the smaller `λ`, then to the
/// earlier grid entry.
fn argmin(lambda_grid: &[f64], scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] < scores[best] || (scores[i] == scores[best] && lambda_grid[i] < lambda_grid[best]) {
            best = i;
        }
    }
    best
}

/// Picks `λ` from the grid by robust cross-validation, refitting every fold
/// with the full pipeline under `settings` (its `lambda` is overridden).
pub fn rocv_select(
    data: &Dataset,
    lambda_grid: &[f64],
    settings: &FitSettings,
    config: &RocvConfig,
) -> Result<RocvResult> {
    let scores = rocv_scores(data, lambda_grid, config, |train, lambda| {
        let s = FitSettings {
            lambda,
            ..settings.clone()
        };
        fit(train, &s).map(|f| f.report.theta)
    })?;
    select_from(lambda_grid, scores)
}

pub fn select_from(lambda_grid: &[f64], scores: Vec<f64>) -> Result<RocvResult> {
    if scores.iter().all(|s| !s.is_finite()) {
        warn!("every lambda failed in cross-validation; returning the first grid entry");
    }
    Ok(RocvResult {
        lambda_star: lambda_grid[argmin(lambda_grid, &scores)],
        scores,
    })
}
