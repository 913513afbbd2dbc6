use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::{ModelFamily, Observation, Theta, POISSON_ETA_BOUND, SIGMA2_MIN};

/// Ridge added to the coefficient block of every trial fit so that
/// near-singular subsets still give a finite answer.
const TRIAL_RIDGE: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 50;
const IRLS_TOL: f64 = 1e-8;
/// Consistency factor turning a median absolute deviation into a normal SD.
const MAD_TO_SD: f64 = 1.482_602_218_505_602;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RansacConfig {
    pub n_trials: usize,
    /// Rows per trial fit; `None` means `p + 2`, capped at the pilot size.
    pub subset_size: Option<usize>,
    /// Absolute deviance-residual cutoff. `None` means 2.5 times a median
    /// absolute deviance residual: each trial's own median while it is
    /// refined, and the smallest trial median when trials are compared.
    pub inlier_threshold: Option<f64>,
    /// Refits on the current inlier set after each trial.
    pub refine_rounds: usize,
    /// SD of the Gaussian noise added to `β0` and `β` of the winner.
    pub noise_scale: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            n_trials: 100,
            subset_size: None,
            inlier_threshold: None,
            refine_rounds: 3,
            noise_scale: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacFit {
    pub theta: Theta,
    /// Inliers of the winning fit before any perturbation.
    pub inliers: usize,
    pub threshold: f64,
}

/// Unpenalized (up to a tiny ridge) maximum-likelihood fit on `rows`.
/// Returns `[β0, β…]`.
fn ml_fit(family: ModelFamily, rows: &[&Observation], p: usize) -> Option<Vec<f64>> {
    let n = rows.len();
    let design = DMatrix::from_fn(n, p + 1, |i, j| if j == 0 { 1.0 } else { rows[i].x[j - 1] });
    let mut ridge = DMatrix::<f64>::identity(p + 1, p + 1) * TRIAL_RIDGE;
    ridge[(0, 0)] = 0.0;
    let solve = |w: &DVector<f64>, z: &DVector<f64>| -> Option<DVector<f64>> {
        let xtw = DMatrix::from_fn(p + 1, n, |j, i| design[(i, j)] * w[i]);
        let lhs = &xtw * &design + &ridge;
        let rhs = &xtw * z;
        lhs.clone()
            .cholesky()
            .map(|c| c.solve(&rhs))
            .or_else(|| lhs.lu().solve(&rhs))
    };
    let offset = DVector::from_iterator(n, rows.iter().map(|o| o.offset));
    let y = DVector::from_iterator(n, rows.iter().map(|o| o.y));
    let coef = match family {
        ModelFamily::Linear => solve(&DVector::from_element(n, 1.0), &(&y - &offset))?,
        ModelFamily::Logistic | ModelFamily::Poisson => {
            let mut coef = DVector::zeros(p + 1);
            for _ in 0..IRLS_MAX_ITER {
                let eta = &design * &coef + &offset;
                let mut w = DVector::zeros(n);
                let mut z = DVector::zeros(n);
                for i in 0..n {
                    let e = eta[i].clamp(-POISSON_ETA_BOUND, POISSON_ETA_BOUND);
                    let (mu, var) = match family {
                        ModelFamily::Logistic => {
                            let m = 1.0 / (1.0 + (-e).exp());
                            (m, (m * (1.0 - m)).max(1e-10))
                        }
                        _ => {
                            let m = e.exp();
                            (m, m.max(1e-10))
                        }
                    };
                    w[i] = var;
                    z[i] = e - offset[i] + (y[i] - mu) / var;
                }
                let next = solve(&w, &z)?;
                let change = (&next - &coef).amax();
                coef = next;
                if change < IRLS_TOL {
                    break;
                }
            }
            coef
        }
    };
    coef.iter().all(|c| c.is_finite()).then(|| coef.iter().copied().collect())
}

/// Absolute deviance residual of one row under `[β0, β…]`.
fn deviance_residual(family: ModelFamily, obs: &Observation, coef: &[f64]) -> f64 {
    let eta = obs.offset + coef[0] + coef[1..].iter().zip(&obs.x).map(|(b, x)| b * x).sum::<f64>();
    match family {
        ModelFamily::Linear => (obs.y - eta).abs(),
        ModelFamily::Logistic => {
            // -log-likelihood of the observed label is softplus(∓η)
            let z = if obs.y > 0.5 { -eta } else { eta };
            let nll = if z > 0.0 { z + (-z).exp().ln_1p() } else { z.exp().ln_1p() };
            (2.0 * nll).sqrt()
        }
        ModelFamily::Poisson => {
            let mu = eta.clamp(-POISSON_ETA_BOUND, POISSON_ETA_BOUND).exp();
            let y = obs.y;
            let term = if y > 0.0 { y * (y / mu).ln() } else { 0.0 };
            (2.0 * (term - (y - mu))).max(0.0).sqrt()
        }
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

struct Trial {
    coef: Vec<f64>,
    resid: Vec<f64>,
    median_residual: f64,
}

impl Trial {
    fn new(family: ModelFamily, data: &Dataset, coef: Vec<f64>) -> Self {
        let resid: Vec<f64> = data.iter().map(|o| deviance_residual(family, o, &coef)).collect();
        let median_residual = median(&mut resid.clone());
        Self {
            coef,
            resid,
            median_residual,
        }
    }

    fn inliers(&self, threshold: f64) -> Vec<usize> {
        (0..self.resid.len())
            .filter(|&i| self.resid[i] <= threshold)
            .collect()
    }

    /// The fixed threshold, or 2.5 times this fit's median residual.
    fn own_threshold(&self, fixed: Option<f64>) -> f64 {
        fixed.unwrap_or(2.5 * self.median_residual)
    }
}

fn run_trial(data: &Dataset, config: &RansacConfig, subset_size: usize, trial: usize) -> Option<Trial> {
    let family = data.family();
    let p = data.p();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(trial as u64);
    let subset = sample(&mut rng, data.len(), subset_size).into_vec();
    let rows: Vec<&Observation> = subset.iter().map(|&i| &data.rows()[i]).collect();
    let mut current = Trial::new(family, data, ml_fit(family, &rows, p)?);
    let mut inliers = current.inliers(current.own_threshold(config.inlier_threshold));
    for _ in 0..config.refine_rounds {
        if inliers.len() < subset_size {
            break;
        }
        let rows: Vec<&Observation> = inliers.iter().map(|&i| &data.rows()[i]).collect();
        let Some(coef) = ml_fit(family, &rows, p) else { break };
        current = Trial::new(family, data, coef);
        let next = current.inliers(current.own_threshold(config.inlier_threshold));
        if next == inliers {
            break;
        }
        inliers = next;
    }
    Some(current)
}

/// Random sample consensus over maximum-likelihood fits on small subsets,
/// each followed by `refine_rounds` refits on its inliers.
///
/// Trials run in parallel on independent random streams, so the result
/// does not depend on the thread count.
pub fn ransac_init(pilot: &Dataset, config: &RansacConfig) -> Result<RansacFit> {
    let family = pilot.family();
    let p = pilot.p();
    if config.n_trials == 0 {
        return Err(Error::InvalidInput("RANSAC needs at least one trial".into()));
    }
    if matches!(config.inlier_threshold, Some(t) if !(t > 0.0)) {
        return Err(Error::InvalidInput("the inlier threshold must be positive".into()));
    }
    let subset_size = config.subset_size.unwrap_or(p + 2).min(pilot.len());
    if subset_size == 0 || pilot.len() < subset_size {
        return Err(Error::InvalidInput(format!(
            "pilot of {} rows cannot supply subsets of {subset_size}",
            pilot.len()
        )));
    }
    let trials: Vec<Option<Trial>> = (0..config.n_trials)
        .into_par_iter()
        .map(|t| run_trial(pilot, config, subset_size, t))
        .collect();
    let trials: Vec<Trial> = trials.into_iter().flatten().collect();
    if trials.is_empty() {
        return Err(Error::Overflow {
            context: "every RANSAC trial fit",
            index: None,
        });
    }
    // One cutoff for all trials so that their inlier counts are comparable.
    let threshold = config.inlier_threshold.unwrap_or_else(|| {
        2.5 * trials
            .iter()
            .map(|t| t.median_residual)
            .fold(f64::INFINITY, f64::min)
    });
    let counts: Vec<usize> = trials.iter().map(|t| t.inliers(threshold).len()).collect();
    let mut best = 0;
    for k in 1..trials.len() {
        if counts[k] > counts[best]
            || (counts[k] == counts[best] && trials[k].median_residual < trials[best].median_residual)
        {
            best = k;
        }
    }
    let inlier_rows = trials[best].inliers(threshold);
    let best = &trials[best];
    if inlier_rows.len() < subset_size {
        warn!(
            "low consensus: best RANSAC fit has {} inliers for subsets of {subset_size}",
            inlier_rows.len()
        );
    }
    debug!("RANSAC: {} inliers at threshold {threshold}", inlier_rows.len());

    let mut theta = Theta {
        beta0: best.coef[0],
        beta: best.coef[1..].to_vec(),
        sigma2: None,
    };
    if family.has_variance() {
        let mut r: Vec<f64> = inlier_rows
            .iter()
            .map(|&i| {
                let o = &pilot.rows()[i];
                o.y - o.offset - theta.linear_predictor(&o.x)
            })
            .collect();
        let centre = median(&mut r.clone());
        let mut dev: Vec<f64> = r.iter_mut().map(|v| (*v - centre).abs()).collect();
        let sd = MAD_TO_SD * median(&mut dev);
        theta.sigma2 = Some((sd * sd).max(SIGMA2_MIN));
    }
    if config.noise_scale > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(u64::MAX);
        let mut noise = || config.noise_scale * rng.sample::<f64, _>(StandardNormal);
        theta.beta0 += noise();
        theta.beta.iter_mut().for_each(|b| *b += noise());
    }
    Ok(RansacFit {
        theta,
        inliers: inlier_rows.len(),
        threshold,
    })
}
