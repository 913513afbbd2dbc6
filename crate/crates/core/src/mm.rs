//! Majorization-minimization with coordinate descent for the sparse
//! γ-linear regression; a deterministic reference for the stochastic fits.

use log::warn;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::{GammaLoss, ModelFamily, Theta, SIGMA2_MIN};
use crate::objective::cross_entropy_with;
use crate::optim::soft_threshold;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmConfig {
    pub max_iter: usize,
    /// Stop when the max-norm parameter change drops below this.
    pub tol: f64,
}

impl Default for MmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmFit {
    pub theta: Theta,
    /// Final normalized kernel weights.
    pub weights: Vec<f64>,
    /// `d̄_γ + λ‖β‖₁` at the start and after every sweep.
    pub objective: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Columns with no weighted variation, held at their initial value.
    pub frozen: Vec<usize>,
}

/// `α_i = K_i / Σ_l K_l`, computed from log kernels.
pub fn mm_weights(data: &Dataset, theta: &Theta, gamma: f64) -> Result<Vec<f64>> {
    let loss = GammaLoss::new(data.family(), gamma)?;
    weights_with(&loss, data, theta)
}

fn weights_with(loss: &GammaLoss, data: &Dataset, theta: &Theta) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let ln_k = data
        .iter()
        .enumerate()
        .map(|(i, o)| loss.ln_kernel(o, theta).map_err(|e| e.at_sample(i)))
        .collect::<Result<Vec<_>>>()?;
    let top = ln_k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = ln_k.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

fn objective(loss: &GammaLoss, data: &Dataset, theta: &Theta, lambda: f64) -> Result<f64> {
    Ok(cross_entropy_with(loss, data, theta)? + lambda * theta.l1_norm())
}

/// Minimizes `d̄_γ(θ) + λ‖β‖₁` for the linear family.
///
/// Each sweep refreshes the weights, then updates the intercept, every
/// coefficient in order (using the coefficients already updated in this
/// sweep), and finally the variance.
pub fn mm_coordinate_descent(
    data: &Dataset,
    gamma: f64,
    lambda: f64,
    init: &Theta,
    config: &MmConfig,
) -> Result<MmFit> {
    if data.family() != ModelFamily::Linear {
        return Err(Error::InvalidInput(format!(
            "the MM solver handles the linear family only, got {}",
            data.family()
        )));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!("gamma must be positive, got {gamma}")));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be nonnegative, got {lambda}")));
    }
    if data.p() == 0 {
        return Err(Error::InvalidInput("the MM solver needs at least one covariate".into()));
    }
    init.validate(ModelFamily::Linear, data.p())?;
    let loss = GammaLoss::new(ModelFamily::Linear, gamma)?;
    let n = data.len();
    let p = data.p();
    let rows = data.rows();

    let frozen: Vec<usize> = (0..p)
        .filter(|&j| rows.iter().all(|o| o.x[j] == rows[0].x[j]))
        .collect();
    for &j in &frozen {
        warn!("covariate {} is constant; its coefficient stays at the initial value", j + 1);
    }

    let mut theta = init.clone();
    let mut trace = vec![objective(&loss, data, &theta, lambda)?];
    // r_i = y_i - β0 - xᵢᵀβ, kept in step with θ
    let mut resid: Vec<f64> = rows.iter().map(|o| o.y - theta.linear_predictor(&o.x)).collect();
    let mut alpha = weights_with(&loss, data, &theta)?;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..config.max_iter {
        iterations += 1;
        let previous = theta.clone();
        let s2 = theta.sigma2.expect("validated");

        let beta0: f64 = (0..n).map(|i| alpha[i] * (resid[i] + theta.beta0)).sum();
        let shift = beta0 - theta.beta0;
        resid.iter_mut().for_each(|r| *r -= shift);
        theta.beta0 = beta0;

        for j in 0..p {
            if frozen.binary_search(&j).is_ok() {
                continue;
            }
            let old = theta.beta[j];
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..n {
                let x = rows[i].x[j];
                num += alpha[i] * (resid[i] + old * x) * x;
                den += alpha[i] * x * x;
            }
            if !(den > 0.0) {
                // all weight sits on rows where this column is zero
                continue;
            }
            let new = soft_threshold(num, s2 * lambda) / den;
            if new != old {
                let delta = new - old;
                for i in 0..n {
                    resid[i] -= delta * rows[i].x[j];
                }
                theta.beta[j] = new;
            }
        }

        let s2_new: f64 = (1.0 + gamma) * (0..n).map(|i| alpha[i] * resid[i] * resid[i]).sum::<f64>();
        theta.sigma2 = Some(s2_new.max(SIGMA2_MIN));

        trace.push(objective(&loss, data, &theta, lambda)?);
        alpha = weights_with(&loss, data, &theta)?;
        let change = theta
            .to_vec()
            .iter()
            .zip(previous.to_vec())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if change < config.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("MM stopped after {iterations} sweeps without meeting tol = {}", config.tol);
    }
    Ok(MmFit {
        theta,
        weights: alpha,
        objective: trace,
        iterations,
        converged,
        frozen,
    })
}
