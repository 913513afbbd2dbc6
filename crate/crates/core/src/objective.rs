//! Empirical γ-cross entropy and the regularized risks.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::{GammaLoss, Theta};
use crate::sum::CompensatedSum;

/// A regularized risk together with the settings it was computed under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskValue {
    pub value: f64,
    pub n_samples: usize,
    pub lambda: f64,
    pub gamma: f64,
}

/// Mean of the kernel over `data`.
pub fn mean_kernel(loss: &GammaLoss, data: &Dataset, theta: &Theta) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    let mut sum = CompensatedSum::new();
    for (i, obs) in data.iter().enumerate() {
        sum.add(loss.kernel(obs, theta).map_err(|e| e.at_sample(i))?);
    }
    Ok(sum.value() / data.len() as f64)
}

/// `d̄_γ(θ) = -(1/γ) log( (1/N) Σ K_i )`.
///
/// Evaluated through a log-sum-exp of `ln K_i` so that data far from the
/// model cannot underflow the mean to zero.
pub fn empirical_gamma_cross_entropy(data: &Dataset, theta: &Theta, gamma: f64) -> Result<f64> {
    let loss = GammaLoss::new(data.family(), gamma)?;
    cross_entropy_with(&loss, data, theta)
}

pub fn cross_entropy_with(loss: &GammaLoss, data: &Dataset, theta: &Theta) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Empty("dataset"));
    }
    if loss.gamma <= 0.0 {
        return Err(Error::InvalidInput("the cross entropy needs gamma > 0".into()));
    }
    let ln_k = data
        .iter()
        .enumerate()
        .map(|(i, o)| loss.ln_kernel(o, theta).map_err(|e| e.at_sample(i)))
        .collect::<Result<Vec<_>>>()?;
    let top = ln_k.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tail: CompensatedSum = ln_k.iter().map(|v| (v - top).exp()).collect();
    let ln_mean = top + (tail.value() / data.len() as f64).ln();
    let value = -ln_mean / loss.gamma;
    if !value.is_finite() {
        return Err(Error::Overflow {
            context: "gamma cross entropy",
            index: None,
        });
    }
    Ok(value)
}

/// Mean negated kernel plus `λ‖β‖₁` on the training data.
pub fn emp_risk(data: &Dataset, theta: &Theta, gamma: f64, lambda: f64) -> Result<RiskValue> {
    let loss = GammaLoss::new(data.family(), gamma)?;
    risk_with(&loss, data, theta, lambda)
}

/// Same formula as [`emp_risk`], evaluated on held-out data.
pub fn exp_risk(test_data: &Dataset, theta: &Theta, gamma: f64, lambda: f64) -> Result<RiskValue> {
    emp_risk(test_data, theta, gamma, lambda)
}

pub fn risk_with(loss: &GammaLoss, data: &Dataset, theta: &Theta, lambda: f64) -> Result<RiskValue> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    let value = -mean_kernel(loss, data, theta)? + lambda * theta.l1_norm();
    Ok(RiskValue {
        value,
        n_samples: data.len(),
        lambda,
        gamma: loss.gamma,
    })
}
