//! End-to-end fitting: pilot sample, RANSAC start, smoothness estimates and
//! one of the optimizers.

use std::fmt;
use std::str::FromStr;

use log::info;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, ResamplingStream};
use crate::error::{Error, Result};
use crate::family::{GammaLoss, ModelFamily, Theta};
use crate::mm::{mm_coordinate_descent, MmConfig};
use crate::objective::risk_with;
use crate::optim::{
    estimate_l_tau2, projected_gradient_norm, rspg_run, sgd_run, two_phase_rspg_run, DTilde,
    FitReport, Policy, ProbeConfig, RspgConfig, Smoothness, StepSchedule,
};
use crate::select::{ransac_init, RansacConfig};
use crate::series::SeriesTolerance;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Rspg,
    TwoPhaseRspg,
    Sgd,
    Mm,
}

impl Optimizer {
    pub fn name(self) -> &'static str {
        match self {
            Optimizer::Rspg => "rspg",
            Optimizer::TwoPhaseRspg => "2rspg",
            Optimizer::Sgd => "sgd",
            Optimizer::Mm => "mm",
        }
    }
}

impl fmt::Display for Optimizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Optimizer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rspg" => Ok(Optimizer::Rspg),
            "2rspg" | "2-rspg" | "two-phase" => Ok(Optimizer::TwoPhaseRspg),
            "sgd" => Ok(Optimizer::Sgd),
            "mm" => Ok(Optimizer::Mm),
            other => Err(Error::InvalidInput(format!("unknown optimizer `{other}`"))),
        }
    }
}

/// Every knob of a fit. Stochastic stages draw from sub-seeds of `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSettings {
    pub gamma: f64,
    pub lambda: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Pilot rows for the start point and the `L`, `τ²` estimates.
    pub n_init: usize,
    /// Optimization sample budget; `None` means the training-set size.
    pub n_total: Option<usize>,
    pub d_tilde: DTilde,
    pub n_cand: usize,
    pub n_post: Option<usize>,
    pub ransac: RansacConfig,
    pub probe: ProbeConfig,
    pub sgd: StepSchedule,
    pub mm: MmConfig,
    pub series: SeriesTolerance,
    /// Explicit start; skips RANSAC when set.
    pub init: Option<Theta>,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            lambda: 1e-2,
            optimizer: Optimizer::TwoPhaseRspg,
            seed: 0,
            n_init: 200,
            n_total: None,
            d_tilde: DTilde::Fixed(1.0),
            n_cand: 5,
            n_post: None,
            ransac: RansacConfig::default(),
            probe: ProbeConfig::default(),
            sgd: StepSchedule::default(),
            mm: MmConfig::default(),
            series: SeriesTolerance::default(),
            init: None,
        }
    }
}

/// Stage tags for [`sub_seed`].
const PILOT: u64 = 1;
const RANSAC: u64 = 2;
const PROBE: u64 = 3;
const OPTIMIZE: u64 = 4;

/// Independent seed for one stage of a run.
pub fn sub_seed(seed: u64, stage: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1000 + stage);
    rand::Rng::random(&mut rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineFit {
    pub init: Theta,
    pub smoothness: Smoothness,
    /// Projected gradient norm at the start point on the training data.
    pub init_pg_norm: f64,
    pub report: FitReport,
}

/// Seeded pilot subsample of at most `n_init` rows.
pub fn pilot_sample(data: &Dataset, n_init: usize, seed: u64) -> Dataset {
    let n = n_init.min(data.len());
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, PILOT));
    let mut idx = sample(&mut rng, data.len(), n).into_vec();
    idx.sort_unstable();
    data.subset(&idx)
}

/// Start point and smoothness estimates shared by every optimizer.
pub fn prepare(data: &Dataset, settings: &FitSettings) -> Result<(Theta, Smoothness)> {
    if data.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 rows to fit, got {}",
            data.len()
        )));
    }
    let pilot = pilot_sample(data, settings.n_init, settings.seed);
    let init = match &settings.init {
        Some(t) => {
            t.validate(data.family(), data.p())?;
            t.clone()
        }
        None => {
            let cfg = RansacConfig {
                seed: sub_seed(settings.seed, RANSAC),
                ..settings.ransac
            };
            ransac_init(&pilot, &cfg)?.theta
        }
    };
    let loss = GammaLoss::new(data.family(), settings.gamma)?.with_series(settings.series);
    let probe = ProbeConfig {
        seed: sub_seed(settings.seed, PROBE),
        ..settings.probe
    };
    let smoothness = estimate_l_tau2(&loss, &pilot, &init, &probe)?;
    info!(
        "start point ready: L = {:.4e}, tau2 = {:.4e}",
        smoothness.l, smoothness.tau2
    );
    Ok((init, smoothness))
}

pub fn rspg_config(data: &Dataset, settings: &FitSettings, smoothness: &Smoothness) -> RspgConfig {
    RspgConfig {
        d_tilde: settings.d_tilde,
        n_cand: settings.n_cand,
        n_post: settings.n_post,
        seed: sub_seed(settings.seed, OPTIMIZE),
        series: settings.series,
        ..RspgConfig::new(
            settings.gamma,
            settings.lambda,
            settings.n_total.unwrap_or(data.len()),
            smoothness.l,
            smoothness.tau2,
        )
    }
}

/// Runs the configured optimizer from a given start.
pub fn optimize(
    data: &Dataset,
    settings: &FitSettings,
    init: &Theta,
    smoothness: &Smoothness,
) -> Result<FitReport> {
    let config = rspg_config(data, settings, smoothness);
    let mut stream = ResamplingStream::new(data, config.seed)?;
    match settings.optimizer {
        Optimizer::Rspg => rspg_run(&mut stream, init, &config),
        Optimizer::TwoPhaseRspg => two_phase_rspg_run(&mut stream, init, &config),
        Optimizer::Sgd => sgd_run(&mut stream, init, &config, &settings.sgd),
        Optimizer::Mm => {
            let fit = mm_coordinate_descent(data, settings.gamma, settings.lambda, init, &settings.mm)?;
            let loss = GammaLoss::new(data.family(), settings.gamma)?;
            Ok(FitReport {
                pg_norm: projected_gradient_norm(&loss, data, &fit.theta, config.eta(), settings.lambda)?,
                emp_risk: risk_with(&loss, data, &fit.theta, settings.lambda)?.value,
                stop_index: fit.iterations,
                policy: Policy {
                    batch_size: data.len(),
                    horizon: fit.iterations,
                    eta: config.eta(),
                },
                samples_used: fit.iterations * data.len(),
                theta: fit.theta,
                candidates: Vec::new(),
                trace: Vec::new(),
            })
        }
    }
}

/// Full fit on `data`.
pub fn fit(data: &Dataset, settings: &FitSettings) -> Result<PipelineFit> {
    if settings.optimizer == Optimizer::Mm && data.family() != ModelFamily::Linear {
        return Err(Error::InvalidInput(format!(
            "the MM optimizer handles the linear family only, got {}",
            data.family()
        )));
    }
    let (init, smoothness) = prepare(data, settings)?;
    let loss = GammaLoss::new(data.family(), settings.gamma)?.with_series(settings.series);
    let eta = 1.0 / (2.0 * smoothness.l);
    let init_pg_norm = projected_gradient_norm(&loss, data, &init, eta, settings.lambda)?;
    let report = optimize(data, settings, &init, &smoothness)?;
    Ok(PipelineFit {
        init,
        smoothness,
        init_pg_norm,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate_linear, SimSpec};

    #[test]
    fn optimizer_names_roundtrip() {
        for o in [Optimizer::Rspg, Optimizer::TwoPhaseRspg, Optimizer::Sgd, Optimizer::Mm] {
            assert_eq!(o.name().parse::<Optimizer>().unwrap(), o);
        }
        assert!("adam".parse::<Optimizer>().is_err());
    }

    #[test]
    fn stage_seeds_differ() {
        let s: Vec<u64> = (1..=4).map(|k| sub_seed(7, k)).collect();
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(sub_seed(7, 2), sub_seed(7, 2));
    }

    #[test]
    fn fits_are_reproducible() {
        let sim = simulate_linear(&SimSpec::linear(400, 15, 0.2, 5)).unwrap();
        let settings = FitSettings {
            seed: 11,
            ransac: RansacConfig {
                n_trials: 20,
                ..Default::default()
            },
            ..Default::default()
        };
        let a = fit(&sim.data, &settings).unwrap();
        let b = fit(&sim.data, &settings).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mm_rejects_count_data() {
        let rows = (0..10)
            .map(|i| crate::family::Observation::new(vec![i as f64], 1.0))
            .collect();
        let d = Dataset::new(ModelFamily::Poisson, 1, rows).unwrap();
        let settings = FitSettings {
            optimizer: Optimizer::Mm,
            ..Default::default()
        };
        assert!(fit(&d, &settings).is_err());
    }
}
