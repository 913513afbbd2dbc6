//! Stochastic proximal optimizers for the regularized γ-risk.

mod prox;
mod rspg;
mod smoothness;

pub use prox::{
    minibatch_policy, projected_gradient_norm, prox_step, soft_threshold, stopping_distribution,
    Policy, ALPHA_STRONG,
};
pub use rspg::{
    rspg_run, sgd_run, two_phase_rspg_run, Candidate, DTilde, FitReport, RspgConfig,
    StepSchedule, TraceEntry,
};
pub use smoothness::{estimate_l_tau2, ProbeConfig, Smoothness};
