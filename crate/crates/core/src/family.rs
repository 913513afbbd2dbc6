//! Conditional densities, the gamma-divergence kernel and its gradients.
//!
//! For a density `f(y|x;θ)` and `γ > 0` the kernel is
//!
//! ```text
//! K(y, x; θ) = f(y|x;θ)^γ / ( ∫ f(t|x;θ)^{1+γ} dt )^{γ/(1+γ)}
//! ```
//!
//! and the stochastic loss minimized by the optimizers is `-K`. Each family
//! evaluates `ln K` in closed form (linear, logistic) or through the Poisson
//! power sums, and provides the exact gradient of `-K` with respect to the
//! intercept, the coefficients and, for the linear family, the variance.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::series::{ln_poisson_pmf, power_sums, SeriesTolerance};

/// Lower bound on the error variance of the linear family.
pub const SIGMA2_MIN: f64 = 1e-6;

/// The Poisson linear predictor (including the offset) is clamped to
/// `[-POISSON_ETA_BOUND, POISSON_ETA_BOUND]` before exponentiation.
pub const POISSON_ETA_BOUND: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    /// Gaussian response, identity link, unknown variance.
    Linear,
    /// Bernoulli response, logit link.
    Logistic,
    /// Count response, log link with optional offset.
    Poisson,
}

impl ModelFamily {
    pub fn has_variance(self) -> bool {
        matches!(self, ModelFamily::Linear)
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelFamily::Linear => "linear",
            ModelFamily::Logistic => "logistic",
            ModelFamily::Poisson => "poisson",
        }
    }

    /// Check that a response value is admissible for this family.
    pub fn check_response(self, y: f64) -> Result<()> {
        let ok = match self {
            ModelFamily::Linear => y.is_finite(),
            ModelFamily::Logistic => y == 0.0 || y == 1.0,
            ModelFamily::Poisson => y >= 0.0 && y.is_finite() && y.fract() == 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "response {y} is not valid for the {self} family"
            )))
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" | "gaussian" => Ok(ModelFamily::Linear),
            "logistic" | "binomial" => Ok(ModelFamily::Logistic),
            "poisson" => Ok(ModelFamily::Poisson),
            other => Err(Error::InvalidInput(format!("unknown family `{other}`"))),
        }
    }
}

/// One row of data.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub x: Vec<f64>,
    pub y: f64,
    /// Added to the linear predictor of the Poisson family (log exposure).
    /// Ignored by the other families.
    pub offset: f64,
}

impl Observation {
    pub fn new(x: Vec<f64>, y: f64) -> Self {
        Self { x, y, offset: 0.0 }
    }

    pub fn with_offset(x: Vec<f64>, y: f64, offset: f64) -> Self {
        Self { x, y, offset }
    }
}

/// Model parameters: intercept, coefficients and (linear family only) the
/// error variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Theta {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub sigma2: Option<f64>,
}

impl Theta {
    /// All-zero coefficients; unit variance for the linear family.
    pub fn zeros(family: ModelFamily, p: usize) -> Self {
        Self {
            beta0: 0.0,
            beta: vec![0.0; p],
            sigma2: family.has_variance().then_some(1.0),
        }
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// Number of free parameters.
    pub fn dim(&self) -> usize {
        1 + self.beta.len() + usize::from(self.sigma2.is_some())
    }

    pub fn validate(&self, family: ModelFamily, p: usize) -> Result<()> {
        if self.beta.len() != p {
            return Err(Error::InvalidInput(format!(
                "theta has {} coefficients but the data has {p} covariates",
                self.beta.len()
            )));
        }
        match (family.has_variance(), self.sigma2) {
            (true, Some(s)) if s >= SIGMA2_MIN && s.is_finite() => {}
            (true, Some(s)) => {
                return Err(Error::InvalidInput(format!(
                    "sigma2 = {s} is below the floor {SIGMA2_MIN}"
                )))
            }
            (true, None) => {
                return Err(Error::InvalidInput(
                    "the linear family needs a variance parameter".into(),
                ))
            }
            (false, Some(_)) => {
                return Err(Error::InvalidInput(format!(
                    "the {family} family has no variance parameter"
                )))
            }
            (false, None) => {}
        }
        if !self.beta0.is_finite() || self.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidInput("theta has non-finite entries".into()));
        }
        Ok(())
    }

    /// `β0 + xᵀβ`
    #[inline]
    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.beta0 + dot(&self.beta, x)
    }

    pub fn l1_norm(&self) -> f64 {
        self.beta.iter().map(|b| b.abs()).sum()
    }

    /// Flatten as `[β0, β1, …, βp, σ²?]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.push(self.beta0);
        v.extend_from_slice(&self.beta);
        if let Some(s) = self.sigma2 {
            v.push(s);
        }
        v
    }

    /// Inverse of [`Theta::to_vec`].
    pub fn from_slice(family: ModelFamily, values: &[f64]) -> Result<Self> {
        let extra = usize::from(family.has_variance());
        if values.len() < 1 + extra {
            return Err(Error::InvalidInput(format!(
                "need at least {} values for a {family} parameter vector",
                1 + extra
            )));
        }
        let p = values.len() - 1 - extra;
        Ok(Self {
            beta0: values[0],
            beta: values[1..1 + p].to_vec(),
            sigma2: family.has_variance().then(|| values[1 + p]),
        })
    }

    /// Euclidean distance over all parameters, including σ².
    pub fn distance(&self, other: &Theta) -> f64 {
        self.to_vec()
            .iter()
            .zip(other.to_vec())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Gradient of the loss with the same layout as [`Theta`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub beta0: f64,
    pub beta: Vec<f64>,
    pub sigma2: Option<f64>,
}

impl Gradient {
    pub fn zeros_like(theta: &Theta) -> Self {
        Self {
            beta0: 0.0,
            beta: vec![0.0; theta.beta.len()],
            sigma2: theta.sigma2.map(|_| 0.0),
        }
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.beta.len() + 2);
        v.push(self.beta0);
        v.extend_from_slice(&self.beta);
        if let Some(s) = self.sigma2 {
            v.push(s);
        }
        v
    }

    pub fn norm(&self) -> f64 {
        self.to_vec().iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    fn scale(&mut self, factor: f64) {
        self.beta0 *= factor;
        self.beta.iter_mut().for_each(|b| *b *= factor);
        if let Some(s) = self.sigma2.as_mut() {
            *s *= factor;
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// The gamma-divergence loss for one family: evaluates kernels and
/// mini-batch gradients of `-K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaLoss {
    pub family: ModelFamily,
    pub gamma: f64,
    pub series: SeriesTolerance,
}

impl GammaLoss {
    pub fn new(family: ModelFamily, gamma: f64) -> Result<Self> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "gamma must be finite and nonnegative, got {gamma}"
            )));
        }
        Ok(Self {
            family,
            gamma,
            series: SeriesTolerance::default(),
        })
    }

    pub fn with_series(mut self, series: SeriesTolerance) -> Self {
        self.series = series;
        self
    }

    /// `ln K(y, x; θ)`
    pub fn ln_kernel(&self, obs: &Observation, theta: &Theta) -> Result<f64> {
        let g = self.gamma;
        let value = match self.family {
            ModelFamily::Linear => {
                let s2 = linear_sigma2(theta)?;
                let r = obs.y - theta.linear_predictor(&obs.x);
                linear_ln_scale(g, s2) - g * r * r / (2.0 * s2)
            }
            ModelFamily::Logistic => {
                self.family.check_response(obs.y)?;
                let u = theta.linear_predictor(&obs.x);
                g * obs.y * u - g / (1.0 + g) * softplus((1.0 + g) * u)
            }
            ModelFamily::Poisson => {
                self.family.check_response(obs.y)?;
                let mu = poisson_mean(theta, obs);
                let sums = power_sums(mu, g, &self.series)?;
                g * ln_poisson_pmf(obs.y as u64, mu) - g / (1.0 + g) * sums.normalizer.ln()
            }
        };
        if value.is_nan() || value == f64::INFINITY {
            return Err(Error::Overflow {
                context: "gamma kernel",
                index: None,
            });
        }
        Ok(value)
    }

    /// `K(y, x; θ)`. Positive in exact arithmetic; rows far in the tail
    /// underflow to `0.0`, which is not an error.
    pub fn kernel(&self, obs: &Observation, theta: &Theta) -> Result<f64> {
        Ok(self.ln_kernel(obs, theta)?.exp())
    }

    /// Add `weight · ∇(-K)` for one observation into `grad`.
    pub fn accumulate(
        &self,
        obs: &Observation,
        theta: &Theta,
        weight: f64,
        grad: &mut Gradient,
    ) -> Result<()> {
        let g = self.gamma;
        match self.family {
            ModelFamily::Linear => {
                let s2 = linear_sigma2(theta)?;
                let r = obs.y - theta.linear_predictor(&obs.x);
                let k = (linear_ln_scale(g, s2) - g * r * r / (2.0 * s2)).exp();
                let d_eta = -g * k * r / s2;
                let d_s2 = 0.5 * g * k * (1.0 / ((1.0 + g) * s2) - r * r / (s2 * s2));
                check_finite(d_eta)?;
                check_finite(d_s2)?;
                add_eta_term(grad, &obs.x, weight * d_eta);
                if let Some(gs) = grad.sigma2.as_mut() {
                    *gs += weight * d_s2;
                }
            }
            ModelFamily::Logistic => {
                self.family.check_response(obs.y)?;
                let u = theta.linear_predictor(&obs.x);
                let k = (g * obs.y * u - g / (1.0 + g) * softplus((1.0 + g) * u)).exp();
                let d_eta = -g * k * (obs.y - sigmoid((1.0 + g) * u));
                check_finite(d_eta)?;
                add_eta_term(grad, &obs.x, weight * d_eta);
            }
            ModelFamily::Poisson => {
                self.family.check_response(obs.y)?;
                let mu = poisson_mean(theta, obs);
                let sums = power_sums(mu, g, &self.series)?;
                let ln_k =
                    g * ln_poisson_pmf(obs.y as u64, mu) - g / (1.0 + g) * sums.normalizer.ln();
                // Evaluated at the clamped mean when the predictor leaves
                // the bound, so the iterate is still pulled back inside.
                let d_eta = g * ln_k.exp() * sums.weighted(obs.y) / sums.normalizer;
                check_finite(d_eta)?;
                add_eta_term(grad, &obs.x, weight * d_eta);
            }
        }
        Ok(())
    }

    /// Mean of `∇(-K)` over a mini-batch.
    pub fn gradient<'a, I>(&self, batch: I, theta: &Theta) -> Result<Gradient>
    where
        I: IntoIterator<Item = &'a Observation>,
    {
        let mut grad = Gradient::zeros_like(theta);
        let mut count = 0usize;
        for (i, obs) in batch.into_iter().enumerate() {
            self.accumulate(obs, theta, 1.0, &mut grad)
                .map_err(|e| e.at_sample(i))?;
            count += 1;
        }
        if count == 0 {
            return Err(Error::Empty("mini-batch"));
        }
        grad.scale(1.0 / count as f64);
        Ok(grad)
    }
}

/// `K(y, x; θ)` with the default series tolerance.
pub fn gamma_kernel(
    family: ModelFamily,
    obs: &Observation,
    theta: &Theta,
    gamma: f64,
) -> Result<f64> {
    GammaLoss::new(family, gamma)?.kernel(obs, theta)
}

/// Mini-batch gradient `(ξ₁, ξ₂, ξ₃)` of the linear family.
pub fn xi_linear<'a>(
    batch: impl IntoIterator<Item = &'a Observation>,
    theta: &Theta,
    gamma: f64,
) -> Result<Gradient> {
    GammaLoss::new(ModelFamily::Linear, gamma)?.gradient(batch, theta)
}

/// Mini-batch gradient `(ν₁, ν₂)` of the logistic family.
pub fn nu_logistic<'a>(
    batch: impl IntoIterator<Item = &'a Observation>,
    theta: &Theta,
    gamma: f64,
) -> Result<Gradient> {
    GammaLoss::new(ModelFamily::Logistic, gamma)?.gradient(batch, theta)
}

/// Mini-batch gradient `(ζ₁, ζ₂)` of the Poisson family.
pub fn zeta_poisson<'a>(
    batch: impl IntoIterator<Item = &'a Observation>,
    theta: &Theta,
    gamma: f64,
    tol: &SeriesTolerance,
) -> Result<Gradient> {
    GammaLoss::new(ModelFamily::Poisson, gamma)?
        .with_series(*tol)
        .gradient(batch, theta)
}

/// `((1+γ)/(2πσ²))^{γ/(2(1+γ))}` in log form.
#[inline]
fn linear_ln_scale(gamma: f64, sigma2: f64) -> f64 {
    gamma / (2.0 * (1.0 + gamma)) * ((1.0 + gamma) / (2.0 * std::f64::consts::PI * sigma2)).ln()
}

fn linear_sigma2(theta: &Theta) -> Result<f64> {
    match theta.sigma2 {
        Some(s) if s > 0.0 => Ok(s),
        Some(s) => Err(Error::InvalidInput(format!("sigma2 must be positive, got {s}"))),
        None => Err(Error::InvalidInput(
            "the linear family needs a variance parameter".into(),
        )),
    }
}

/// `exp(clamp(β0 + xᵀβ + offset))`
#[inline]
pub fn poisson_mean(theta: &Theta, obs: &Observation) -> f64 {
    (theta.linear_predictor(&obs.x) + obs.offset)
        .clamp(-POISSON_ETA_BOUND, POISSON_ETA_BOUND)
        .exp()
}

#[inline]
fn add_eta_term(grad: &mut Gradient, x: &[f64], d_eta: f64) {
    grad.beta0 += d_eta;
    for (gj, xj) in grad.beta.iter_mut().zip(x) {
        *gj += d_eta * xj;
    }
}

#[inline]
fn check_finite(v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Overflow {
            context: "gradient",
            index: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn theta(beta0: f64, beta: &[f64], sigma2: Option<f64>) -> Theta {
        Theta {
            beta0,
            beta: beta.to_vec(),
            sigma2,
        }
    }

    #[test]
    fn logistic_kernel_at_the_decision_boundary() {
        let obs = Observation::new(vec![0.0], 1.0);
        let k = gamma_kernel(ModelFamily::Logistic, &obs, &theta(0.0, &[0.0], None), 1.0).unwrap();
        assert_relative_eq!(k, std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-15);
    }

    #[test]
    fn linear_kernel_with_zero_residual() {
        let s2 = 1.0 / (2.0 * std::f64::consts::PI);
        let obs = Observation::new(vec![2.0], 3.0);
        let k = gamma_kernel(ModelFamily::Linear, &obs, &theta(1.0, &[1.0], Some(s2)), 0.1).unwrap();
        assert_relative_eq!(k, 1.1f64.powf(1.0 / 22.0), max_relative = 1e-14);
    }

    #[test]
    fn poisson_kernel_unit_mean() {
        // e^{-1} / sqrt(e^{-2} I0(2)), 50-digit reference
        let obs = Observation::new(vec![0.0], 1.0);
        let k = gamma_kernel(ModelFamily::Poisson, &obs, &theta(0.0, &[0.0], None), 1.0).unwrap();
        assert_relative_eq!(k, 0.662_326_414_871_888_3, max_relative = 1e-12);
    }

    #[test]
    fn zero_gamma_gives_zero_gradients() {
        let batch = [
            Observation::new(vec![0.3, -1.0], 1.0),
            Observation::new(vec![1.2, 0.4], 0.0),
        ];
        let t = theta(0.2, &[0.5, -0.1], Some(0.8));
        let g = xi_linear(&batch, &t, 0.0).unwrap();
        assert!(g.to_vec().iter().all(|v| *v == 0.0));
        let t = theta(0.2, &[0.5, -0.1], None);
        let g = nu_logistic(&batch, &t, 0.0).unwrap();
        assert!(g.to_vec().iter().all(|v| *v == 0.0));
        let g = zeta_poisson(&batch, &t, 0.0, &SeriesTolerance::default()).unwrap();
        assert!(g.to_vec().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn linear_gradient_with_zero_residual() {
        let gamma: f64 = 0.3;
        let s2: f64 = 0.7;
        let obs = Observation::new(vec![1.0, 2.0], 0.6);
        let t = theta(0.5, &[0.5, -0.2], Some(s2));
        let g = xi_linear([&obs], &t, gamma).unwrap();
        assert!(g.beta0.abs() < 1e-15);
        assert!(g.beta.iter().all(|b| b.abs() < 1e-15));
        let expected = gamma / 2.0
            * ((1.0 + gamma) / (2.0 * std::f64::consts::PI * s2)).powf(gamma / (2.0 * (1.0 + gamma)))
            / ((1.0 + gamma) * s2);
        assert_relative_eq!(g.sigma2.unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn linear_intercept_gradient_reference() {
        // central difference of -K in β0, 50-digit arithmetic
        let obs = Observation::new(vec![0.0], 1.0);
        let g = xi_linear([&obs], &theta(0.0, &[0.0], Some(1.0)), 0.1).unwrap();
        assert_relative_eq!(g.beta0, -0.087_879_152_200_851_38, max_relative = 1e-13);
    }

    #[test]
    fn logistic_intercept_gradient_reference() {
        let obs = Observation::new(vec![0.0], 1.0);
        let g = nu_logistic([&obs], &theta(0.0, &[0.0], None), 1.0).unwrap();
        assert_relative_eq!(g.beta0, -0.5 * std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-15);
    }

    #[test]
    fn logistic_gradient_vanishes_when_saturated() {
        let obs = Observation::new(vec![1.0], 1.0);
        let g = nu_logistic([&obs], &theta(0.0, &[800.0], None), 0.5).unwrap();
        assert!(g.beta0.abs() < 1e-300);
        // and the kernel stays finite far into the other tail
        let obs = Observation::new(vec![1.0], 0.0);
        let k = gamma_kernel(ModelFamily::Logistic, &obs, &theta(0.0, &[800.0], None), 0.5).unwrap();
        assert!(k > 0.0 && k < 1e-100);
    }

    #[test]
    fn poisson_intercept_gradient_reference() {
        let obs = Observation::new(vec![0.0], 3.0);
        let g = zeta_poisson([&obs], &theta(0.0, &[0.0], None), 0.5, &SeriesTolerance::default())
            .unwrap();
        assert_relative_eq!(g.beta0, -0.333_694_465_711_113_7, max_relative = 1e-11);
    }

    #[test]
    fn poisson_gamma_zero_interior_factor_is_mean_minus_count() {
        let sums = power_sums(1.0, 0.0, &SeriesTolerance::default()).unwrap();
        assert!(sums.weighted(1.0).abs() < 1e-12);
    }

    #[test]
    fn poisson_offset_shifts_the_mean() {
        let t = theta(0.1, &[0.2], None);
        let with = Observation::with_offset(vec![1.0], 2.0, 1.5);
        let shifted = theta(1.6, &[0.2], None);
        let without = Observation::new(vec![1.0], 2.0);
        let loss = GammaLoss::new(ModelFamily::Poisson, 0.4).unwrap();
        assert_relative_eq!(
            loss.kernel(&with, &t).unwrap(),
            loss.kernel(&without, &shifted).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn family_response_checks() {
        let loss = GammaLoss::new(ModelFamily::Logistic, 0.5).unwrap();
        let t = theta(0.0, &[0.0], None);
        assert!(loss.kernel(&Observation::new(vec![0.0], 0.5), &t).is_err());
        let loss = GammaLoss::new(ModelFamily::Poisson, 0.5).unwrap();
        assert!(loss.kernel(&Observation::new(vec![0.0], -1.0), &t).is_err());
        assert!(loss.kernel(&Observation::new(vec![0.0], 1.5), &t).is_err());
    }

    #[test]
    fn far_tail_rows_underflow_to_zero() {
        let loss = GammaLoss::new(ModelFamily::Linear, 1.0).unwrap();
        let t = theta(0.0, &[0.0], Some(0.25));
        let k = loss.kernel(&Observation::new(vec![0.0], 60.0), &t).unwrap();
        assert_eq!(k, 0.0);
        assert!(loss.ln_kernel(&Observation::new(vec![0.0], 60.0), &t).unwrap().is_finite());
    }

    #[test]
    fn empty_batches_are_rejected() {
        let t = theta(0.0, &[0.0], Some(1.0));
        let empty: [Observation; 0] = [];
        assert!(matches!(xi_linear(&empty, &t, 0.1), Err(Error::Empty(_))));
    }

    #[test]
    fn theta_flatten_roundtrip_and_validation() {
        let t = theta(0.5, &[1.0, -2.0], Some(0.3));
        assert_eq!(Theta::from_slice(ModelFamily::Linear, &t.to_vec()).unwrap(), t);
        assert!(t.validate(ModelFamily::Linear, 2).is_ok());
        assert!(t.validate(ModelFamily::Linear, 3).is_err());
        assert!(t.validate(ModelFamily::Logistic, 2).is_err());
        let low = theta(0.0, &[0.0], Some(1e-9));
        assert!(low.validate(ModelFamily::Linear, 1).is_err());
        assert_eq!("Poisson".parse::<ModelFamily>().unwrap(), ModelFamily::Poisson);
    }
}
