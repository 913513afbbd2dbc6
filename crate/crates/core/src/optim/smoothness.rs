use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::family::{GammaLoss, Gradient, Theta, SIGMA2_MIN};

/// Lower bound returned for `L` when every probe sees a flat gradient.
const L_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub n_probe: usize,
    /// Typical Euclidean distance of a probe point from `θ0`.
    pub radius: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            n_probe: 20,
            radius: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Smoothness {
    pub l: f64,
    pub tau2: f64,
}

fn perturbed(theta: &Theta, radius: f64, rng: &mut ChaCha8Rng) -> Theta {
    let scale = radius / (theta.dim() as f64).sqrt();
    let mut draw = || scale * rng.sample::<f64, _>(StandardNormal);
    Theta {
        beta0: theta.beta0 + draw(),
        beta: theta.beta.iter().map(|b| b + draw()).collect(),
        sigma2: theta.sigma2.map(|s| (s + draw()).max(SIGMA2_MIN)),
    }
}

fn gradient_distance(a: &Gradient, b: &Gradient) -> f64 {
    a.to_vec()
        .iter()
        .zip(b.to_vec())
        .map(|(u, v)| (u - v).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Estimates the smoothness constant `L` and the gradient variance `τ²` on
/// a pilot sample.
///
/// `L` is the largest ratio `‖∇Φ(θa) - ∇Φ(θb)‖ / ‖θa - θb‖` over random
/// pairs near `θ0`, where `Φ` is the pilot mean loss. `τ²` is the mean
/// squared distance of single-sample gradients from their average at `θ0`.
pub fn estimate_l_tau2(
    loss: &GammaLoss,
    pilot: &Dataset,
    theta0: &Theta,
    probe: &ProbeConfig,
) -> Result<Smoothness> {
    if pilot.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "the pilot sample needs at least 2 rows, got {}",
            pilot.len()
        )));
    }
    if probe.n_probe == 0 || !(probe.radius > 0.0) {
        return Err(Error::InvalidInput(format!("invalid probe settings {probe:?}")));
    }
    theta0.validate(pilot.family(), pilot.p())?;

    // Welford keeps the variance exactly zero for identical rows.
    let dim = theta0.dim();
    let mut mean = vec![0.0; dim];
    let mut m2 = 0.0;
    for (i, obs) in pilot.iter().enumerate() {
        let mut g = Gradient::zeros_like(theta0);
        loss.accumulate(obs, theta0, 1.0, &mut g)
            .map_err(|e| e.at_sample(i))?;
        let k = (i + 1) as f64;
        for (mu, gi) in mean.iter_mut().zip(g.to_vec()) {
            let delta = gi - *mu;
            *mu += delta / k;
            m2 += delta * (gi - *mu);
        }
    }
    let tau2 = m2 / pilot.len() as f64;
    if tau2 == 0.0 {
        warn!("pilot gradients are identical; the variance estimate is zero");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(probe.seed);
    let mut l: f64 = 0.0;
    for _ in 0..probe.n_probe {
        let a = perturbed(theta0, probe.radius, &mut rng);
        let b = perturbed(theta0, probe.radius, &mut rng);
        let dist = a.distance(&b);
        if dist == 0.0 {
            continue;
        }
        let ga = loss.gradient(pilot, &a)?;
        let gb = loss.gradient(pilot, &b)?;
        l = l.max(gradient_distance(&ga, &gb) / dist);
    }
    if !(l > 0.0) {
        warn!("the pilot gradient did not change between probes; using L = {L_FLOOR}");
        l = L_FLOOR;
    }
    Ok(Smoothness { l, tau2 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{ModelFamily, Observation};

    fn linear_pilot() -> Dataset {
        let rows = (0..60)
            .map(|i| {
                let x = (i as f64 / 10.0).sin();
                Observation::new(vec![x], 0.5 + 1.5 * x + 0.3 * (i as f64 * 1.7).cos())
            })
            .collect();
        Dataset::new(ModelFamily::Linear, 1, rows).unwrap()
    }

    #[test]
    fn identical_rows_have_zero_variance() {
        let rows = (0..30).map(|_| Observation::new(vec![0.4, -1.0], 1.3)).collect();
        let d = Dataset::new(ModelFamily::Linear, 2, rows).unwrap();
        let loss = GammaLoss::new(ModelFamily::Linear, 0.1).unwrap();
        let t = Theta {
            beta0: 0.2,
            beta: vec![0.5, 0.1],
            sigma2: Some(0.8),
        };
        let s = estimate_l_tau2(&loss, &d, &t, &ProbeConfig::default()).unwrap();
        assert_eq!(s.tau2, 0.0);
        assert!(s.l > 0.0);
    }

    /// Spectral norm of a dense central-difference Hessian of the pilot loss.
    fn hessian_norm(loss: &GammaLoss, d: &Dataset, t: &Theta) -> f64 {
        let fam = d.family();
        let base = t.to_vec();
        let n = base.len();
        let h = 1e-5;
        let mut hess = nalgebra::DMatrix::zeros(n, n);
        for j in 0..n {
            let mut up = base.clone();
            let mut down = base.clone();
            up[j] += h;
            down[j] -= h;
            let gu = loss.gradient(d, &Theta::from_slice(fam, &up).unwrap()).unwrap().to_vec();
            let gd = loss.gradient(d, &Theta::from_slice(fam, &down).unwrap()).unwrap().to_vec();
            for i in 0..n {
                hess[(i, j)] = (gu[i] - gd[i]) / (2.0 * h);
            }
        }
        let sym = (&hess + hess.transpose()) * 0.5;
        sym.symmetric_eigenvalues().iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    #[test]
    fn smoothness_is_within_a_factor_of_four_of_the_hessian() {
        let d = linear_pilot();
        let loss = GammaLoss::new(ModelFamily::Linear, 0.1).unwrap();
        let t = Theta {
            beta0: 0.4,
            beta: vec![1.4],
            sigma2: Some(0.15),
        };
        let s = estimate_l_tau2(&loss, &d, &t, &ProbeConfig { radius: 0.01, ..Default::default() }).unwrap();
        let oracle = hessian_norm(&loss, &d, &t);
        assert!(s.l <= 4.0 * oracle && s.l >= oracle / 4.0, "L = {}, oracle = {oracle}", s.l);
    }

    #[test]
    fn small_probes_give_stable_ratios() {
        let d = linear_pilot();
        let loss = GammaLoss::new(ModelFamily::Linear, 0.1).unwrap();
        let t = Theta {
            beta0: 0.4,
            beta: vec![1.4],
            sigma2: Some(0.15),
        };
        let ls: Vec<f64> = (0..30)
            .map(|seed| {
                let probe = ProbeConfig {
                    n_probe: 1,
                    radius: 1e-4,
                    seed,
                };
                estimate_l_tau2(&loss, &d, &t, &probe).unwrap().l
            })
            .collect();
        let mean = ls.iter().sum::<f64>() / ls.len() as f64;
        let sd = (ls.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ls.len() - 1) as f64).sqrt();
        assert!(sd / mean < 0.5, "cv = {}", sd / mean);
    }

    #[test]
    fn estimates_are_seeded() {
        let d = linear_pilot();
        let loss = GammaLoss::new(ModelFamily::Linear, 0.1).unwrap();
        let t = Theta::zeros(ModelFamily::Linear, 1);
        let probe = ProbeConfig { seed: 4, ..Default::default() };
        assert_eq!(
            estimate_l_tau2(&loss, &d, &t, &probe).unwrap(),
            estimate_l_tau2(&loss, &d, &t, &probe).unwrap()
        );
    }
}
