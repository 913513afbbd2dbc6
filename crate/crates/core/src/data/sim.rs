//! Synthetic data with planted outliers.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::{ModelFamily, Observation, Theta};

/// One-based indices of the nonzero true coefficients; each one equals its
/// own index.
pub const TRUE_SUPPORT: [usize; 5] = [1, 2, 4, 7, 11];

/// Correlation between neighbouring covariates; `corr(x_i, x_j) = ρ^{|i-j|}`.
pub const COVARIATE_CORRELATION: f64 = 0.2;
pub const NOISE_SD: f64 = 0.5;
pub const OUTLIER_COVARIATE_SD: f64 = 0.5;
pub const OUTLIER_SHIFT: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    /// Fraction of rows replaced by outliers, in `[0, 1)`.
    pub epsilon: f64,
    pub seed: u64,
    pub family: ModelFamily,
}

impl SimSpec {
    pub fn linear(n: usize, p: usize, epsilon: f64, seed: u64) -> Self {
        Self {
            n,
            p,
            epsilon,
            seed,
            family: ModelFamily::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("simulation needs n >= 1".into()));
        }
        if self.p < 11 {
            return Err(Error::InvalidInput(format!(
                "the planted support reaches index 11, so p must be at least 11 (got {})",
                self.p
            )));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidInput(format!(
                "contamination fraction must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn outlier_count(&self) -> usize {
        (self.epsilon * self.n as f64).floor() as usize
    }
}

/// A simulated dataset together with the parameters that generated it.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub data: Dataset,
    pub truth: Theta,
    /// Sorted row indices of the contaminated rows.
    pub contaminated: Vec<usize>,
}

/// `β* = (1, 2, 0, 4, 0, 0, 7, 0, 0, 0, 11, 0, …)`, `β0* = 0`, `σ²* = 0.25`.
pub fn true_theta(p: usize) -> Theta {
    let mut beta = vec![0.0; p];
    for j in TRUE_SUPPORT {
        if j <= p {
            beta[j - 1] = j as f64;
        }
    }
    Theta {
        beta0: 0.0,
        beta,
        sigma2: Some(NOISE_SD * NOISE_SD),
    }
}

/// Row generator; each row draws from its own ChaCha stream so the output
/// does not depend on generation order.
fn row_rng(seed: u64, row: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(row as u64 + 1);
    rng
}

/// `y = β0 + xᵀβ* + e` with `x ~ N(0, Σ)`, `Σ_ij = 0.2^{|i-j|}` and
/// `e ~ N(0, 0.5²)`. Outlier rows use `x ~ N(0, 0.5² I)` and
/// `e ~ N(20, 0.5²)`.
pub fn simulate_linear(spec: &SimSpec) -> Result<Simulation> {
    spec.validate()?;
    if spec.family != ModelFamily::Linear {
        return Err(Error::InvalidInput(format!(
            "only the linear simulation model is available, got {}",
            spec.family
        )));
    }
    let truth = true_theta(spec.p);
    let mut picker = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut contaminated = sample(&mut picker, spec.n, spec.outlier_count()).into_vec();
    contaminated.sort_unstable();

    let rho = COVARIATE_CORRELATION;
    let innovation = (1.0 - rho * rho).sqrt();
    let rows = (0..spec.n)
        .map(|i| {
            let mut rng = row_rng(spec.seed, i);
            let outlier = contaminated.binary_search(&i).is_ok();
            let mut x = Vec::with_capacity(spec.p);
            if outlier {
                for _ in 0..spec.p {
                    let z: f64 = rng.sample(StandardNormal);
                    x.push(OUTLIER_COVARIATE_SD * z);
                }
            } else {
                // AR(1) recursion has exactly the Toeplitz covariance ρ^{|i-j|}
                let mut prev = 0.0;
                for j in 0..spec.p {
                    let z: f64 = rng.sample(StandardNormal);
                    prev = if j == 0 { z } else { rho * prev + innovation * z };
                    x.push(prev);
                }
            }
            let z: f64 = rng.sample(StandardNormal);
            let shift = if outlier { OUTLIER_SHIFT } else { 0.0 };
            let y = truth.linear_predictor(&x) + shift + NOISE_SD * z;
            Observation::new(x, y)
        })
        .collect();
    Ok(Simulation {
        data: Dataset::new(ModelFamily::Linear, spec.p, rows)?,
        truth,
        contaminated,
    })
}

/// Add `⌊scale · t⌋` to the response of `⌊rate · N⌋` randomly chosen rows,
/// where `t = exp(offset)` is the exposure. Returns the modified dataset and
/// the sorted indices that were changed.
pub fn contaminate_poisson(
    data: &Dataset,
    rate: f64,
    scale: f64,
    seed: u64,
) -> Result<(Dataset, Vec<usize>)> {
    if data.family() != ModelFamily::Poisson {
        return Err(Error::InvalidInput(format!(
            "poisson contamination applies to count data, got {}",
            data.family()
        )));
    }
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidInput(format!("rate must lie in [0, 1], got {rate}")));
    }
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::InvalidInput(format!("scale must be nonnegative, got {scale}")));
    }
    let count = (rate * data.len() as f64).floor() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, data.len(), count).into_vec();
    picked.sort_unstable();
    let mut rows = data.rows().to_vec();
    for &i in &picked {
        rows[i].y += (scale * rows[i].offset.exp()).floor();
    }
    Ok((Dataset::new(data.family(), data.p(), rows)?, picked))
}
