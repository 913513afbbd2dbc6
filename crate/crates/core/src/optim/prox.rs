use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::{GammaLoss, Gradient, Theta, SIGMA2_MIN};

/// Strong convexity modulus of the distance generating function
/// `w(θ) = ½‖θ‖²`.
pub const ALPHA_STRONG: f64 = 1.0;

/// `S(t, a) = sign(t) · max(|t| - a, 0)`
#[inline]
pub fn soft_threshold(t: f64, a: f64) -> f64 {
    if t > a {
        t - a
    } else if t < -a {
        t + a
    } else {
        0.0
    }
}

/// Closed-form minimizer of `⟨g, θ⟩ + λ‖β‖₁ + ‖θ - θ_t‖² / (2η)` over the
/// parameter domain (σ² projected onto `[SIGMA2_MIN, ∞)`). The intercept is
/// not penalized.
pub fn prox_step(theta: &Theta, grad: &Gradient, eta: f64, lambda: f64) -> Theta {
    debug_assert_eq!(theta.beta.len(), grad.beta.len());
    let shrink = eta * lambda;
    Theta {
        beta0: theta.beta0 - eta * grad.beta0,
        beta: theta
            .beta
            .iter()
            .zip(&grad.beta)
            .map(|(b, g)| soft_threshold(b - eta * g, shrink))
            .collect(),
        sigma2: theta
            .sigma2
            .map(|s| (s - eta * grad.sigma2.unwrap_or(0.0)).max(SIGMA2_MIN)),
    }
}

/// Probability of stopping at each iteration `t = 1..=T`:
/// `P_R(t) ∝ α η_t - L η_t²`.
pub fn stopping_distribution(etas: &[f64], l: f64, alpha: f64) -> Result<Vec<f64>> {
    if etas.is_empty() {
        return Err(Error::InvalidSchedule("empty step schedule".into()));
    }
    if !(l > 0.0 && alpha > 0.0) {
        return Err(Error::InvalidSchedule(format!(
            "need L > 0 and alpha > 0, got L = {l}, alpha = {alpha}"
        )));
    }
    let mut weights = Vec::with_capacity(etas.len());
    for (t, &eta) in etas.iter().enumerate() {
        if !(eta > 0.0 && eta <= alpha / l) {
            return Err(Error::InvalidSchedule(format!(
                "step {} is {eta}, outside (0, alpha/L = {}]",
                t + 1,
                alpha / l
            )));
        }
        weights.push((alpha * eta - l * eta * eta).max(0.0));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidSchedule(
            "every step equals alpha/L, so no iteration can be selected".into(),
        ));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(weights)
}

/// Constant step size and mini-batch size for a sample budget `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Policy {
    /// Mini-batch size `m`.
    pub batch_size: usize,
    /// Iteration limit `T = ⌊N/m⌋`.
    pub horizon: usize,
    /// Step size `η = α/(2L)`.
    pub eta: f64,
}

/// `m = ⌈min{max{1, τ√(6N)/(4L D̃)}, N}⌉`, `η = α/(2L)`, `T = ⌊N/m⌋`.
pub fn minibatch_policy(n: usize, l: f64, tau: f64, d_tilde: f64) -> Result<Policy> {
    if n == 0 {
        return Err(Error::InvalidInput("the sample budget must be positive".into()));
    }
    if !(l > 0.0 && l.is_finite()) {
        return Err(Error::InvalidInput(format!("L must be positive and finite, got {l}")));
    }
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::InvalidInput(format!("tau must be nonnegative, got {tau}")));
    }
    if !(d_tilde > 0.0 && d_tilde.is_finite()) {
        return Err(Error::InvalidInput(format!("D~ must be positive, got {d_tilde}")));
    }
    let raw = tau * (6.0 * n as f64).sqrt() / (4.0 * l * d_tilde);
    let m = raw.max(1.0).min(n as f64).ceil() as usize;
    let m = m.clamp(1, n);
    Ok(Policy {
        batch_size: m,
        horizon: n / m,
        eta: ALPHA_STRONG / (2.0 * l),
    })
}

/// `‖θ - θ⁺‖ / η`, with `θ⁺` the prox step along the full-data gradient.
pub fn projected_gradient_norm(
    loss: &GammaLoss,
    full_data: &Dataset,
    theta: &Theta,
    eta: f64,
    lambda: f64,
) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::InvalidInput(format!("eta must be positive, got {eta}")));
    }
    let grad = loss.gradient(full_data, theta)?;
    Ok(prox_displacement(theta, &grad, eta, lambda))
}

pub(crate) fn prox_displacement(theta: &Theta, grad: &Gradient, eta: f64, lambda: f64) -> f64 {
    prox_step(theta, grad, eta, lambda).distance(theta) / eta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::ModelFamily;
    use proptest::prelude::*;

    fn theta(beta: &[f64], s2: Option<f64>) -> Theta {
        Theta {
            beta0: 0.3,
            beta: beta.to_vec(),
            sigma2: s2,
        }
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
        assert_eq!(soft_threshold(-1.0, 1.0), 0.0);
    }

    #[test]
    fn zero_gradient_without_penalty_is_the_identity() {
        let t = theta(&[1.0, -2.0], Some(0.5));
        assert_eq!(prox_step(&t, &Gradient::zeros_like(&t), 0.7, 0.0), t);
    }

    #[test]
    fn variance_is_projected_onto_its_floor() {
        let t = theta(&[0.0], Some(0.1));
        let mut g = Gradient::zeros_like(&t);
        g.sigma2 = Some(0.3);
        // 0.1 - 1.0 * 0.3 = -0.2
        assert_eq!(prox_step(&t, &g, 1.0, 0.0).sigma2, Some(SIGMA2_MIN));
    }

    #[test]
    fn soft_threshold_through_the_prox() {
        let t = theta(&[3.0, 0.5], None);
        let out = prox_step(&t, &Gradient::zeros_like(&t), 0.5, 2.0);
        assert_eq!(out.beta, vec![2.0, 0.0]);
    }

    #[test]
    fn stopping_distribution_examples() {
        let u = stopping_distribution(&[0.25; 8], 2.0, 1.0).unwrap();
        assert!(u.iter().all(|&p| p == 0.125));
        let two = stopping_distribution(&[0.5, 0.25], 1.0, 1.0).unwrap();
        assert!((two[0] - 0.571_428_571_428_571_4).abs() < 1e-15);
        assert!((two[1] - 0.428_571_428_571_428_55).abs() < 1e-15);
        assert_eq!(stopping_distribution(&[0.1], 1.0, 1.0).unwrap(), vec![1.0]);
        assert!(matches!(
            stopping_distribution(&[1.0, 1.0], 1.0, 1.0),
            Err(Error::InvalidSchedule(_))
        ));
        assert!(stopping_distribution(&[2.0], 1.0, 1.0).is_err());
    }

    #[test]
    fn policy_examples() {
        let p = minibatch_policy(10_000, 2.0, 1.0, 1.0).unwrap();
        assert_eq!((p.batch_size, p.horizon, p.eta), (31, 322, 0.25));
        let p = minibatch_policy(500, 1.0, 0.0, 1.0).unwrap();
        assert_eq!((p.batch_size, p.horizon), (1, 500));
        let p = minibatch_policy(10, 1e-3, 100.0, 1e-3).unwrap();
        assert_eq!((p.batch_size, p.horizon), (10, 1));
    }

    #[test]
    fn projected_gradient_without_penalty_is_the_gradient_norm() {
        use crate::data::{simulate_linear, SimSpec};
        let sim = simulate_linear(&SimSpec::linear(80, 12, 0.2, 3)).unwrap();
        let loss = GammaLoss::new(ModelFamily::Linear, 0.1).unwrap();
        let mut t = sim.truth.clone();
        t.beta0 = 0.2;
        let g = loss.gradient(&sim.data, &t).unwrap();
        let pg = projected_gradient_norm(&loss, &sim.data, &t, 0.01, 0.0).unwrap();
        assert!((pg - g.norm()).abs() < 1e-12 * g.norm().max(1.0));
    }

    proptest! {
        #[test]
        fn distribution_sums_to_one(etas in prop::collection::vec(0.01f64..0.49, 1..40), l in 0.5f64..2.0) {
            let p = stopping_distribution(&etas, l, 1.0).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&v| v >= 0.0));
        }

        #[test]
        fn unpenalized_prox_is_a_gradient_step(
            b in prop::collection::vec(-5.0f64..5.0, 1..8),
            eta in 0.01f64..2.0,
            seed in 0.0f64..1.0,
        ) {
            let t = theta(&b, Some(4.0));
            let g = Gradient {
                beta0: seed - 0.5,
                beta: b.iter().map(|v| v * seed - 1.0).collect(),
                sigma2: Some(seed),
            };
            let out = prox_step(&t, &g, eta, 0.0);
            prop_assert_eq!(out.beta0, t.beta0 - eta * g.beta0);
            for j in 0..b.len() {
                prop_assert_eq!(out.beta[j], t.beta[j] - eta * g.beta[j]);
            }
            let s = 4.0 - eta * seed;
            prop_assert_eq!(out.sigma2.unwrap(), s.max(SIGMA2_MIN));
        }

        #[test]
        fn shrinkage_grows_with_lambda(
            b in prop::collection::vec(-5.0f64..5.0, 1..8),
            l1 in 0.0f64..3.0,
            l2 in 0.0f64..3.0,
        ) {
            let t = theta(&b, None);
            let g = Gradient { beta0: 0.0, beta: vec![0.4; b.len()], sigma2: None };
            let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
            let a = prox_step(&t, &g, 0.5, lo);
            let c = prox_step(&t, &g, 0.5, hi);
            for j in 0..b.len() {
                prop_assert!(c.beta[j].abs() <= a.beta[j].abs());
            }
            // past max |β - ηg| / η every coefficient is zero
            let lambda_max = t.beta.iter().map(|v| (v - 0.2).abs()).fold(0.0, f64::max) / 0.5;
            prop_assert!(prox_step(&t, &g, 0.5, lambda_max).beta.iter().all(|v| *v == 0.0));
        }

        #[test]
        fn policy_respects_the_budget(n in 1usize..100_000, l in 0.01f64..100.0, tau in 0.0f64..100.0, d in 0.01f64..10.0) {
            let p = minibatch_policy(n, l, tau, d).unwrap();
            prop_assert!(p.batch_size >= 1 && p.batch_size <= n);
            prop_assert!(p.horizon >= 1);
            prop_assert!(p.batch_size * p.horizon <= n);
        }
    }
}
