//! Per-parameter importance regularization (SI and MAS).
//!
//! Both strategies penalize `c · Σ_k Ω_k (θ*_k − θ_k)²`, where `θ*` is the
//! parameter snapshot taken when the current task started. They differ in how
//! Ω is accumulated once a task is finished.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Architecture, BoundMlp, Tape};
use crate::node::LossDecorator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceState {
    /// Running path integral ω, accumulated during the current task (SI).
    pub omega_running: Vec<f64>,
    /// Regularization strengths Ω accumulated over finished tasks.
    pub omega: Vec<f64>,
    /// θ* at the start of the current task.
    pub theta_snapshot: Vec<f64>,
    /// Regularization constant (SI's c, MAS's λ).
    pub c: f64,
    /// SI damping ξ.
    pub xi: f64,
    /// Optimizer steps observed since the last consolidation.
    pub steps_observed: usize,
}

impl ImportanceState {
    pub fn new(theta: &[f64], c: f64, xi: f64) -> Self {
        Self {
            omega_running: vec![0.0; theta.len()],
            omega: vec![0.0; theta.len()],
            theta_snapshot: theta.to_vec(),
            c,
            xi,
            steps_observed: 0,
        }
    }

    /// Marks the start of a new task.
    pub fn snapshot(&mut self, theta: &[f64]) {
        self.theta_snapshot = theta.to_vec();
        self.omega_running.iter_mut().for_each(|w| *w = 0.0);
        self.steps_observed = 0;
    }
}

/// `c · Σ_k Ω_k (θ*_k − θ_k)²`
pub fn si_penalty(state: &ImportanceState, params: &[f64]) -> f64 {
    state.c
        * state
            .omega
            .iter()
            .zip(&state.theta_snapshot)
            .zip(params)
            .map(|((o, s), p)| o * (s - p) * (s - p))
            .sum::<f64>()
}

/// Adds the penalty gradient `2c Ω_k (θ_k − θ*_k)` into `grad` and returns
/// the penalty.
pub fn penalty_with_grad(state: &ImportanceState, params: &[f64], grad: &mut [f64]) -> f64 {
    let mut total = 0.0;
    for (k, g) in grad.iter_mut().enumerate() {
        let diff = params[k] - state.theta_snapshot[k];
        total += state.omega[k] * diff * diff;
        *g += 2.0 * state.c * state.omega[k] * diff;
    }
    state.c * total
}

/// `ω_k ← ω_k − g_k Δθ_k` for one optimizer step.
pub fn si_accumulate(state: &mut ImportanceState, grads: &[f64], param_delta: &[f64]) {
    for ((w, g), d) in state.omega_running.iter_mut().zip(grads).zip(param_delta) {
        *w -= g * d;
    }
    state.steps_observed += 1;
}

/// `Ω_k += max(ω_k, 0) / (Δ_k² + ξ)` with `Δ = θ − θ*`, then resets the
/// running terms and snapshots θ.
pub fn si_consolidate(state: &mut ImportanceState, params: &[f64]) {
    if state.steps_observed == 0 {
        log::warn!("SI consolidation requested before any training step; ignoring");
        return;
    }
    for k in 0..params.len() {
        let delta = params[k] - state.theta_snapshot[k];
        state.omega[k] += state.omega_running[k].max(0.0) / (delta * delta + state.xi);
    }
    state.snapshot(params);
}

/// `Ω_k += (1/N) Σ_n |∂‖f_θ(x_n)‖² / ∂θ_k|` over the sample inputs (one per
/// row), then snapshots θ.
pub fn mas_consolidate(
    state: &mut ImportanceState,
    params: &[f64],
    arch: &Architecture,
    sample_inputs: &Array2<f64>,
) -> Result<()> {
    if sample_inputs.nrows() == 0 {
        return Err(Error::InvalidInput("MAS needs at least one sample input".into()));
    }
    let n = sample_inputs.nrows() as f64;
    let mut acc = vec![0.0; params.len()];
    for x in sample_inputs.outer_iter() {
        let mut tape = Tape::new();
        let theta = tape.row(params);
        let net = BoundMlp::bind(&mut tape, arch, theta)?;
        let input = tape.row(x.as_slice().expect("rows of a standard-layout array"));
        let out = net.forward(&mut tape, input)?;
        let width = tape.value(out).ncols();
        let sq = tape.sq_dist(out, Array2::zeros((1, width)), 1.0);
        let grads = tape.backward(sq)?;
        for (a, g) in acc.iter_mut().zip(grads.flat(theta, params.len())) {
            *a += g.abs();
        }
    }
    for (o, a) in state.omega.iter_mut().zip(acc) {
        *o += a / n;
    }
    state.snapshot(params);
    Ok(())
}

/// Training hook for SI: penalizes and tracks the path integral.
pub struct SiTracker<'a>(pub &'a mut ImportanceState);

impl LossDecorator for SiTracker<'_> {
    fn penalty(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        penalty_with_grad(self.0, params, grad)
    }

    fn observe_step(&mut self, task_grad: &[f64], delta: &[f64]) {
        si_accumulate(self.0, task_grad, delta);
    }
}

/// Training hook for MAS: penalty only.
pub struct MasPenalty<'a>(pub &'a ImportanceState);

impl LossDecorator for MasPenalty<'_> {
    fn penalty(&self, params: &[f64], grad: &mut [f64]) -> f64 {
        penalty_with_grad(self.0, params, grad)
    }
}
