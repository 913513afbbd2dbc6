use log::debug;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SampleStream;
use crate::error::{Error, Result};
use crate::family::{GammaLoss, Gradient, Theta};
use crate::objective::risk_with;
use crate::optim::prox::{
    minibatch_policy, projected_gradient_norm, prox_displacement, prox_step,
    stopping_distribution, Policy, ALPHA_STRONG,
};
use crate::series::SeriesTolerance;

/// ChaCha stream used for drawing stopping indices, kept apart from the
/// stream that feeds mini-batches.
const STOP_STREAM: u64 = 1;

/// Source of the `D̃` constant in the mini-batch policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DTilde {
    Fixed(f64),
    /// Use `D_Ψ = √((Ψ(θ¹) - Ψ*)/L)` from a known lower bound `Ψ*` of the
    /// regularized risk.
    FromOptimum { psi_star: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RspgConfig {
    pub gamma: f64,
    pub lambda: f64,
    /// Total number of samples the optimization phase may draw.
    pub n_total: usize,
    /// Smoothness estimate of the expected loss gradient.
    pub l: f64,
    /// Variance bound of single-sample gradients.
    pub tau2: f64,
    pub d_tilde: DTilde,
    pub n_cand: usize,
    /// Post-optimization sample count; `None` means `⌈N/10⌉`.
    pub n_post: Option<usize>,
    pub seed: u64,
    pub series: SeriesTolerance,
    pub record_trace: bool,
}

impl RspgConfig {
    pub fn new(gamma: f64, lambda: f64, n_total: usize, l: f64, tau2: f64) -> Self {
        Self {
            gamma,
            lambda,
            n_total,
            l,
            tau2,
            d_tilde: DTilde::Fixed(1.0),
            n_cand: 5,
            n_post: None,
            seed: 0,
            series: SeriesTolerance::default(),
            record_trace: false,
        }
    }

    pub fn resolved_n_post(&self) -> usize {
        self.n_post.unwrap_or_else(|| self.n_total.div_ceil(10)).max(1)
    }

    /// Step size `η = α/(2L)`.
    pub fn eta(&self) -> f64 {
        ALPHA_STRONG / (2.0 * self.l)
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        if self.n_total == 0 {
            return Err(Error::InvalidInput("the sample budget must be positive".into()));
        }
        if self.n_cand == 0 {
            return Err(Error::InvalidInput("need at least one candidate".into()));
        }
        if self.n_post == Some(0) {
            return Err(Error::InvalidInput("need at least one post-sample".into()));
        }
        if !(self.tau2 >= 0.0 && self.tau2.is_finite()) {
            return Err(Error::InvalidInput(format!("tau2 must be nonnegative, got {}", self.tau2)));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(Error::InvalidInput(format!("L must be positive, got {}", self.l)));
        }
        Ok(())
    }

    fn loss(&self, stream_family: crate::family::ModelFamily) -> Result<GammaLoss> {
        Ok(GammaLoss::new(stream_family, self.gamma)?.with_series(self.series))
    }
}

/// A stopping index considered by the two-phase method.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub stop_index: usize,
    pub theta: Theta,
    /// `‖θ - θ⁺‖/η` on the post-samples.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    pub batch_gradient_norm: f64,
    pub step_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub theta: Theta,
    /// Index `R` of the returned iterate (for SGD, the number of updates).
    pub stop_index: usize,
    /// Projected gradient norm on the stream's reference data at `η = 1/(2L)`.
    pub pg_norm: f64,
    /// Regularized risk on the stream's reference data.
    pub emp_risk: f64,
    pub policy: Policy,
    pub samples_used: usize,
    pub candidates: Vec<Candidate>,
    pub trace: Vec<TraceEntry>,
}

fn resolve_policy<'d, S: SampleStream<'d>>(
    loss: &GammaLoss,
    stream: &S,
    init: &Theta,
    config: &RspgConfig,
) -> Result<Policy> {
    let d = match config.d_tilde {
        DTilde::Fixed(d) => d,
        DTilde::FromOptimum { psi_star } => {
            let psi1 = risk_with(loss, stream.reference(), init, config.lambda)?.value;
            if !(psi1 > psi_star) {
                return Err(Error::InvalidInput(format!(
                    "the lower bound {psi_star} is not below the initial risk {psi1}"
                )));
            }
            ((psi1 - psi_star) / config.l).sqrt()
        }
    };
    minibatch_policy(config.n_total, config.l, config.tau2.sqrt(), d)
}

fn step<'d, S: SampleStream<'d>>(
    loss: &GammaLoss,
    stream: &mut S,
    theta: &Theta,
    batch_size: usize,
    eta: f64,
    lambda: f64,
    t: usize,
    trace: Option<&mut Vec<TraceEntry>>,
) -> Result<Theta> {
    let batch = stream.next_batch(batch_size);
    let grad = loss
        .gradient(batch.iter().copied(), theta)
        .map_err(|e| e.at_iteration(t))?;
    let next = prox_step(theta, &grad, eta, lambda);
    if let Some(trace) = trace {
        trace.push(TraceEntry {
            iteration: t,
            batch_gradient_norm: grad.norm(),
            step_length: next.distance(theta),
        });
    }
    Ok(next)
}

fn finish<'d, S: SampleStream<'d>>(
    loss: &GammaLoss,
    stream: &S,
    config: &RspgConfig,
    theta: Theta,
    stop_index: usize,
    policy: Policy,
    samples_used: usize,
    candidates: Vec<Candidate>,
    trace: Vec<TraceEntry>,
) -> Result<FitReport> {
    let reference = stream.reference();
    let pg_norm = projected_gradient_norm(loss, reference, &theta, config.eta(), config.lambda)?;
    let emp_risk = risk_with(loss, reference, &theta, config.lambda)?.value;
    Ok(FitReport {
        theta,
        stop_index,
        pg_norm,
        emp_risk,
        policy,
        samples_used,
        candidates,
        trace,
    })
}

/// Draws `count` stopping indices from `P_R` (1-based).
fn draw_stop_indices(policy: &Policy, l: f64, count: usize, seed: u64) -> Result<Vec<usize>> {
    let etas = vec![policy.eta; policy.horizon];
    let probs = stopping_distribution(&etas, l, ALPHA_STRONG)?;
    let dist = WeightedIndex::new(&probs)
        .map_err(|e| Error::InvalidSchedule(format!("stopping distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(STOP_STREAM);
    Ok((0..count).map(|_| dist.sample(&mut rng) + 1).collect())
}

fn forward<'d, S: SampleStream<'d>>(
    loss: &GammaLoss,
    stream: &mut S,
    init: &Theta,
    config: &RspgConfig,
    n_cand: usize,
    post_phase: bool,
) -> Result<FitReport> {
    config.validate()?;
    let reference = stream.reference();
    init.validate(reference.family(), reference.p())?;
    let policy = resolve_policy(loss, stream, init, config)?;
    let stops = draw_stop_indices(&policy, config.l, n_cand, config.seed)?;
    let last = *stops.iter().max().expect("at least one candidate");
    debug!(
        "rspg: m = {}, T = {}, eta = {}, stops = {stops:?}",
        policy.batch_size, policy.horizon, policy.eta
    );

    let mut trace = Vec::new();
    let mut snapshots: Vec<Option<Theta>> = vec![None; n_cand];
    let mut theta = init.clone();
    for t in 1..=last {
        for (s, &r) in stops.iter().enumerate() {
            if r == t {
                snapshots[s] = Some(theta.clone());
            }
        }
        if t < last {
            theta = step(
                loss,
                stream,
                &theta,
                policy.batch_size,
                policy.eta,
                config.lambda,
                t,
                config.record_trace.then_some(&mut trace),
            )?;
        }
    }
    let mut samples_used = (last - 1) * policy.batch_size;
    let snapshots: Vec<Theta> = snapshots
        .into_iter()
        .map(|s| s.expect("every stop index is visited"))
        .collect();

    if !post_phase {
        let theta = snapshots.into_iter().next().expect("one candidate");
        return finish(loss, stream, config, theta, last, policy, samples_used, Vec::new(), trace);
    }

    let n_post = config.resolved_n_post();
    let post = stream.next_batch(n_post);
    samples_used += n_post;
    let mut candidates = Vec::with_capacity(n_cand);
    for (s, theta) in snapshots.into_iter().enumerate() {
        let grad: Gradient = loss
            .gradient(post.iter().copied(), &theta)
            .map_err(|e| e.at_iteration(stops[s]))?;
        let score = prox_displacement(&theta, &grad, policy.eta, config.lambda);
        candidates.push(Candidate {
            stop_index: stops[s],
            theta,
            score,
        });
    }
    let best = pick(&candidates.iter().map(|c| c.score).collect::<Vec<_>>());
    debug!(
        "rspg post-phase scores: {:?}, picked {best}",
        candidates.iter().map(|c| c.score).collect::<Vec<_>>()
    );
    let chosen = candidates[best].clone();
    finish(
        loss,
        stream,
        config,
        chosen.theta,
        chosen.stop_index,
        policy,
        samples_used,
        candidates,
        trace,
    )
}

/// Index of the smallest score; the first one wins ties.
fn pick(scores: &[f64]) -> usize {
    let mut best = 0;
    for s in 1..scores.len() {
        if scores[s] < scores[best] {
            best = s;
        }
    }
    best
}

/// Randomized stochastic projected gradient: draw `R` from `P_R`, take
/// `R - 1` prox steps along mini-batch gradients and return `θ^(R)`.
pub fn rspg_run<'d, S: SampleStream<'d>>(
    stream: &mut S,
    init: &Theta,
    config: &RspgConfig,
) -> Result<FitReport> {
    let loss = config.loss(stream.reference().family())?;
    forward(&loss, stream, init, config, 1, false)
}

/// Two-phase variant: `N_cand` stopping indices share one forward pass; the
/// candidate with the smallest prox displacement on `N_post` fresh samples
/// is returned.
pub fn two_phase_rspg_run<'d, S: SampleStream<'d>>(
    stream: &mut S,
    init: &Theta,
    config: &RspgConfig,
) -> Result<FitReport> {
    let loss = config.loss(stream.reference().family())?;
    forward(&loss, stream, init, config, config.n_cand, true)
}

/// Step sizes `η_t = η₀/√t` with a fixed mini-batch size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule {
    /// Initial step; `None` starts from the RSPG step `1/(2L)`.
    pub eta0: Option<f64>,
    pub batch_size: usize,
}

impl StepSchedule {
    pub fn eta(&self, config: &RspgConfig, t: usize) -> f64 {
        self.eta0.unwrap_or_else(|| config.eta()) / (t as f64).sqrt()
    }
}

impl Default for StepSchedule {
    fn default() -> Self {
        Self {
            eta0: None,
            batch_size: 10,
        }
    }
}

/// Proximal SGD with decaying steps; returns the last iterate after
/// `⌊N/m⌋` updates.
pub fn sgd_run<'d, S: SampleStream<'d>>(
    stream: &mut S,
    init: &Theta,
    config: &RspgConfig,
    schedule: &StepSchedule,
) -> Result<FitReport> {
    config.validate()?;
    if schedule.batch_size == 0 || matches!(schedule.eta0, Some(e) if !(e > 0.0 && e.is_finite())) {
        return Err(Error::InvalidInput(format!(
            "SGD needs a positive batch size and step, got {schedule:?}"
        )));
    }
    let reference = stream.reference();
    init.validate(reference.family(), reference.p())?;
    let loss = config.loss(reference.family())?;
    let m = schedule.batch_size.min(config.n_total);
    let horizon = (config.n_total / m).max(1);
    let mut trace = Vec::new();
    let mut theta = init.clone();
    for t in 1..=horizon {
        theta = step(
            &loss,
            stream,
            &theta,
            m,
            schedule.eta(config, t),
            config.lambda,
            t,
            config.record_trace.then_some(&mut trace),
        )?;
    }
    let policy = Policy {
        batch_size: m,
        horizon,
        eta: schedule.eta(config, horizon),
    };
    finish(&loss, stream, config, theta, horizon, policy, horizon * m, Vec::new(), trace)
}
