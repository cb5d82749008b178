//! Neural ODE trajectory learner.
//!
//! A network `f_θ` defines a vector field; integrating it from a start state
//! over the demonstration timestamps yields the predicted trajectory. The
//! integrator is unrolled on the autodiff tape, so the loss is differentiated
//! straight through the solver steps.
//!
//! Network input layout per step: `[state | task embedding | time]`, where the
//! embedding and the time column are present only when configured.

use std::time::Instant;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{count_params, AdamConfig, AdamState, Architecture, BoundMlp, ParamVector, Tape, Var};

/// Time-indexed sequence of states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    points: Array2<f64>,
    timestamps: Vec<f64>,
}

impl Trajectory {
    pub fn new(points: Array2<f64>, timestamps: Vec<f64>) -> Result<Self> {
        if points.nrows() < 2 {
            return Err(Error::InvalidTrajectory(format!(
                "needs at least 2 points, got {}",
                points.nrows()
            )));
        }
        if points.ncols() == 0 {
            return Err(Error::InvalidTrajectory("state dimension is zero".into()));
        }
        if timestamps.len() != points.nrows() {
            return Err(Error::InvalidTrajectory(format!(
                "{} points but {} timestamps",
                points.nrows(),
                timestamps.len()
            )));
        }
        check_increasing(&timestamps)?;
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTrajectory("non-finite point".into()));
        }
        Ok(Self { points, timestamps })
    }

    pub fn from_rows(rows: &[Vec<f64>], timestamps: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != dim) {
            return Err(Error::InvalidTrajectory(format!(
                "row {i} has {} entries, expected {dim}",
                rows[i].len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let points = Array2::from_shape_vec((rows.len(), dim), flat)
            .map_err(|e| Error::InvalidTrajectory(e.to_string()))?;
        Self::new(points, timestamps)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn point(&self, t: usize) -> ArrayView1<'_, f64> {
        self.points.row(t)
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn start(&self) -> Vec<f64> {
        self.points.row(0).to_vec()
    }

    pub fn end(&self) -> Vec<f64> {
        self.points.row(self.len() - 1).to_vec()
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.points.outer_iter().map(|r| r.to_vec()).collect()
    }

    /// Keeps `count` evenly spaced samples, always including both ends.
    pub fn subsample(&self, count: usize) -> Result<Self> {
        let idx = subsample_indices(self.len(), count)?;
        let rows: Vec<Vec<f64>> = idx.iter().map(|&i| self.points.row(i).to_vec()).collect();
        let ts = idx.iter().map(|&i| self.timestamps[i]).collect();
        Self::from_rows(&rows, ts)
    }
}

fn check_increasing(timestamps: &[f64]) -> Result<()> {
    if let Some(i) = timestamps.iter().position(|t| !t.is_finite()) {
        return Err(Error::NonMonotoneTimestamps(i));
    }
    match timestamps.windows(2).position(|w| w[1] <= w[0]) {
        Some(i) => Err(Error::NonMonotoneTimestamps(i + 1)),
        None => Ok(()),
    }
}

/// Evenly spaced indices into `0..len`, first and last included.
pub fn subsample_indices(len: usize, count: usize) -> Result<Vec<usize>> {
    if count < 2 || count > len {
        return Err(Error::InvalidInput(format!(
            "cannot subsample {len} points to {count}"
        )));
    }
    Ok((0..count)
        .map(|k| ((k as f64) * (len - 1) as f64 / (count - 1) as f64).round() as usize)
        .collect())
}

/// Timestamps for `len` samples: `n / f` when the recording frequency is
/// known, otherwise `n / (len − 1)` so the trajectory spans `[0, 1]`.
pub fn normalized_timestamps(len: usize, recording_frequency: Option<f64>) -> Vec<f64> {
    match recording_frequency {
        Some(f) => (0..len).map(|n| n as f64 / f).collect(),
        None => {
            let denom = (len.max(2) - 1) as f64;
            (0..len).map(|n| n as f64 / denom).collect()
        }
    }
}

/// Demonstrations of one task: same length, dimension and timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct DemonstrationSet {
    pub name: String,
    demos: Vec<Trajectory>,
    pub recording_frequency: Option<f64>,
}

impl DemonstrationSet {
    pub fn new(
        name: impl Into<String>,
        demos: Vec<Trajectory>,
        recording_frequency: Option<f64>,
    ) -> Result<Self> {
        let first = demos
            .first()
            .ok_or_else(|| Error::InvalidInput("demonstration set is empty".into()))?;
        for (i, d) in demos.iter().enumerate().skip(1) {
            if d.len() != first.len() || d.dim() != first.dim() {
                return Err(Error::ShapeMismatch(format!(
                    "demo {i} is {}x{}, demo 0 is {}x{}",
                    d.len(),
                    d.dim(),
                    first.len(),
                    first.dim()
                )));
            }
            if d.timestamps() != first.timestamps() {
                return Err(Error::ShapeMismatch(format!(
                    "demo {i} has different timestamps"
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            demos,
            recording_frequency,
        })
    }

    pub fn demos(&self) -> &[Trajectory] {
        &self.demos
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.demos[0].len()
    }

    pub fn dim(&self) -> usize {
        self.demos[0].dim()
    }

    pub fn timestamps(&self) -> &[f64] {
        self.demos[0].timestamps()
    }

    /// Total number of stored points over all demos.
    pub fn point_count(&self) -> usize {
        self.demos.iter().map(Trajectory::len).sum()
    }

    /// Start states, one row per demo.
    pub fn starts(&self) -> Array2<f64> {
        self.states_at(0)
    }

    /// States at step `t`, one row per demo.
    pub fn states_at(&self, t: usize) -> Array2<f64> {
        let mut out = Array2::zeros((self.len(), self.dim()));
        for (mut row, d) in out.outer_iter_mut().zip(&self.demos) {
            row.assign(&d.point(t));
        }
        out
    }

    pub fn subsample(&self, count: usize) -> Result<Self> {
        let demos = self
            .demos
            .iter()
            .map(|d| d.subsample(count))
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.name.clone(), demos, self.recording_frequency)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    /// One explicit Euler step per data interval.
    #[default]
    Euler,
    /// Classical fourth-order Runge–Kutta, one step per data interval.
    Rk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub architecture: Architecture,
    /// NODE-T (`true`) appends the time to the network input; NODE-I does not.
    pub time_input: bool,
    pub train_iterations: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub solver: Solver,
}

impl NodeConfig {
    /// Checks the network input width against the state and conditioning.
    pub fn validate(&self, state_dim: usize, extra_input_dim: usize) -> Result<()> {
        self.architecture.validate()?;
        let expected = state_dim + extra_input_dim + usize::from(self.time_input);
        if self.architecture.input_dim != expected {
            return Err(Error::DimensionMismatch {
                context: "NODE input width",
                expected,
                got: self.architecture.input_dim,
            });
        }
        if self.architecture.output_dim != state_dim {
            return Err(Error::DimensionMismatch {
                context: "NODE output width",
                expected: state_dim,
                got: self.architecture.output_dim,
            });
        }
        Ok(())
    }

    pub fn param_count(&self) -> usize {
        count_params(&self.architecture)
    }
}

/// Something that maps a batch of network inputs to state derivatives.
pub trait VectorField {
    fn eval(&self, tape: &mut Tape, input: Var) -> Result<Var>;
}

impl VectorField for BoundMlp {
    fn eval(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        self.forward(tape, input)
    }
}

/// Adapts a closure over tape operations into a [`VectorField`].
pub struct FnField<F>(pub F);

impl<F> VectorField for FnField<F>
where
    F: Fn(&mut Tape, Var) -> Var,
{
    fn eval(&self, tape: &mut Tape, input: Var) -> Result<Var> {
        Ok((self.0)(tape, input))
    }
}

/// Integration settings shared by every forward simulation.
#[derive(Debug, Clone, Copy)]
pub struct Conditioning {
    /// 1×E task embedding appended to every network input.
    pub embedding: Option<Var>,
    pub time_input: bool,
    pub solver: Solver,
}

struct FieldInputs<'a, F: VectorField> {
    field: &'a F,
    cond: Conditioning,
    batch: usize,
    embedding_rows: Option<Var>,
}

impl<'a, F: VectorField> FieldInputs<'a, F> {
    fn eval(&self, tape: &mut Tape, y: Var, t: f64) -> Result<Var> {
        let mut parts = vec![y];
        if let Some(e) = self.embedding_rows {
            parts.push(e);
        }
        if self.cond.time_input {
            parts.push(tape.leaf(Array2::from_elem((self.batch, 1), t)));
        }
        let input = if parts.len() == 1 {
            y
        } else {
            tape.concat_cols(&parts)
        };
        self.field.eval(tape, input)
    }
}

/// Unrolls the integrator on `tape` from the batch of start states `y0`
/// (one row per trajectory). Returns one variable per timestamp; the first is
/// `y0` itself.
pub fn integrate_on_tape<F: VectorField>(
    tape: &mut Tape,
    field: &F,
    y0: Var,
    timestamps: &[f64],
    cond: Conditioning,
) -> Result<Vec<Var>> {
    check_increasing(timestamps)?;
    let batch = tape.value(y0).nrows();
    if tape.value(y0).iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState(0));
    }
    let embedding_rows = cond.embedding.map(|e| tape.broadcast_rows(e, batch));
    let inputs = FieldInputs {
        field,
        cond,
        batch,
        embedding_rows,
    };

    let mut states = Vec::with_capacity(timestamps.len());
    states.push(y0);
    let mut y = y0;
    for (n, w) in timestamps.windows(2).enumerate() {
        let (t, h) = (w[0], w[1] - w[0]);
        y = match cond.solver {
            Solver::Euler => {
                let k1 = inputs.eval(tape, y, t)?;
                tape.add_scaled(y, k1, h)
            }
            Solver::Rk4 => {
                let k1 = inputs.eval(tape, y, t)?;
                let y2 = tape.add_scaled(y, k1, h / 2.0);
                let k2 = inputs.eval(tape, y2, t + h / 2.0)?;
                let y3 = tape.add_scaled(y, k2, h / 2.0);
                let k3 = inputs.eval(tape, y3, t + h / 2.0)?;
                let y4 = tape.add_scaled(y, k3, h);
                let k4 = inputs.eval(tape, y4, t + h)?;
                let acc = tape.add_scaled(y, k1, h / 6.0);
                let acc = tape.add_scaled(acc, k2, h / 3.0);
                let acc = tape.add_scaled(acc, k3, h / 3.0);
                tape.add_scaled(acc, k4, h / 6.0)
            }
        };
        if tape.value(y).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState(n + 1));
        }
        states.push(y);
    }
    Ok(states)
}

/// Integrates `field` from a single start state and returns the trajectory.
pub fn integrate<F: VectorField>(
    field: &F,
    y0: &[f64],
    timestamps: &[f64],
    extra_input: Option<&[f64]>,
    time_input: bool,
    solver: Solver,
) -> Result<Trajectory> {
    let mut tape = Tape::new();
    let start = tape.row(y0);
    let embedding = extra_input.map(|e| tape.row(e));
    let cond = Conditioning {
        embedding,
        time_input,
        solver,
    };
    let states = integrate_on_tape(&mut tape, field, start, timestamps, cond)?;
    let rows: Vec<Vec<f64>> = states
        .iter()
        .map(|&s| tape.value(s).iter().copied().collect())
        .collect();
    Trajectory::from_rows(&rows, timestamps.to_vec())
}

/// Integrates the NODE with parameters `params` from `y0`.
pub fn predict_node(
    params: &ParamVector,
    config: &NodeConfig,
    y0: &[f64],
    timestamps: &[f64],
    extra_input: Option<&[f64]>,
) -> Result<Trajectory> {
    let mut tape = Tape::new();
    let theta = tape.row(params.as_slice());
    let net = BoundMlp::bind(&mut tape, &config.architecture, theta)?;
    let expected = y0.len() + extra_input.map_or(0, <[f64]>::len) + usize::from(config.time_input);
    if expected != config.architecture.input_dim {
        return Err(Error::DimensionMismatch {
            context: "NODE input width",
            expected: config.architecture.input_dim,
            got: expected,
        });
    }
    let start = tape.row(y0);
    let embedding = extra_input.map(|e| tape.row(e));
    let cond = Conditioning {
        embedding,
        time_input: config.time_input,
        solver: config.solver,
    };
    let states = integrate_on_tape(&mut tape, &net, start, timestamps, cond)?;
    let rows: Vec<Vec<f64>> = states
        .iter()
        .map(|&s| tape.value(s).iter().copied().collect())
        .collect();
    Trajectory::from_rows(&rows, timestamps.to_vec())
}

/// `½ Σ_t ‖y_t − ŷ_t‖²`, summed over every demonstration.
pub fn node_loss(pred: &Trajectory, obs: &DemonstrationSet) -> Result<f64> {
    if pred.len() != obs.steps() || pred.dim() != obs.dim() {
        return Err(Error::ShapeMismatch(format!(
            "prediction is {}x{}, demonstrations are {}x{}",
            pred.len(),
            pred.dim(),
            obs.steps(),
            obs.dim()
        )));
    }
    Ok(obs
        .demos()
        .iter()
        .map(|d| {
            0.5 * d
                .points()
                .iter()
                .zip(pred.points().iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .sum())
}

/// Records the batched forward simulation of every demo (each from its own
/// start state) and the summed reconstruction loss.
pub fn demo_loss_on_tape(
    tape: &mut Tape,
    arch: &Architecture,
    theta: Var,
    demos: &DemonstrationSet,
    embedding: Option<Var>,
    time_input: bool,
    solver: Solver,
) -> Result<Var> {
    let net = BoundMlp::bind(tape, arch, theta)?;
    let y0 = tape.leaf(demos.starts());
    let cond = Conditioning {
        embedding,
        time_input,
        solver,
    };
    let states = integrate_on_tape(tape, &net, y0, demos.timestamps(), cond)?;
    let terms: Vec<Var> = states
        .iter()
        .enumerate()
        .skip(1)
        .map(|(t, &s)| tape.sq_dist(s, demos.states_at(t), 0.5))
        .collect();
    Ok(tape.sum(&terms))
}

/// Loss value and gradients for a shared NODE conditioned on an optional
/// embedding.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub params: Vec<f64>,
    pub embedding: Option<Vec<f64>>,
    pub flops: u64,
}

pub fn node_loss_and_grad(
    params: &ParamVector,
    config: &NodeConfig,
    demos: &DemonstrationSet,
    embedding: Option<&[f64]>,
) -> Result<LossGrad> {
    let mut tape = Tape::new();
    let theta = tape.row(params.as_slice());
    let e = embedding.map(|e| tape.row(e));
    let loss = demo_loss_on_tape(
        &mut tape,
        &config.architecture,
        theta,
        demos,
        e,
        config.time_input,
        config.solver,
    )?;
    let value = tape.scalar(loss);
    let grads = tape.backward(loss)?;
    Ok(LossGrad {
        loss: value,
        params: grads.flat(theta, params.len()),
        embedding: e.map(|e| grads.flat(e, embedding.map_or(0, <[f64]>::len))),
        flops: tape.flops(),
    })
}

/// Strategy-specific additions to the reconstruction loss.
pub trait LossDecorator {
    /// Adds the penalty gradient at `params` into `grad` and returns the
    /// penalty value.
    fn penalty(&self, params: &[f64], grad: &mut [f64]) -> f64;

    /// Called after every optimizer step with the task-loss gradient and the
    /// applied parameter change.
    fn observe_step(&mut self, _task_grad: &[f64], _delta: &[f64]) {}
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParamVector,
    pub embedding: Option<Vec<f64>>,
    pub loss_history: Vec<f64>,
    pub wall_clock_seconds: f64,
    /// Deterministic work measure of the whole run.
    pub flops: u64,
}

/// Runs `config.train_iterations` Adam steps on the reconstruction loss
/// (plus any decorator penalty). A supplied embedding is trained jointly.
pub fn train_node(
    params: ParamVector,
    demos: &DemonstrationSet,
    config: &NodeConfig,
    embedding: Option<Vec<f64>>,
    mut decorator: Option<&mut dyn LossDecorator>,
) -> Result<TrainOutcome> {
    config.validate(demos.dim(), embedding.as_ref().map_or(0, Vec::len))?;
    if params.len() != config.param_count() {
        return Err(Error::DimensionMismatch {
            context: "NODE parameters",
            expected: config.param_count(),
            got: params.len(),
        });
    }
    let started = Instant::now();
    let mut params = params;
    let mut embedding = embedding;
    let adam_cfg = AdamConfig::with_learning_rate(config.learning_rate);
    let mut adam = AdamState::new(adam_cfg, params.len());
    let mut adam_e = embedding.as_ref().map(|e| AdamState::new(adam_cfg, e.len()));
    let mut history = Vec::with_capacity(config.train_iterations);
    let mut flops = 0u64;

    for iteration in 0..config.train_iterations {
        let lg = node_loss_and_grad(&params, config, demos, embedding.as_deref())?;
        flops += lg.flops;
        let mut total_grad = lg.params.clone();
        let penalty = match decorator.as_deref() {
            Some(d) => d.penalty(params.as_slice(), &mut total_grad),
            None => 0.0,
        };
        let loss = lg.loss + penalty;
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration, loss });
        }
        history.push(loss);
        let delta = adam
            .step(params.as_mut_slice(), &total_grad)
            .map_err(|_| Error::Diverged { iteration, loss })?;
        if let Some(d) = decorator.as_deref_mut() {
            d.observe_step(&lg.params, &delta);
        }
        if let (Some(e), Some(opt), Some(g)) = (embedding.as_mut(), adam_e.as_mut(), lg.embedding.as_ref()) {
            opt.step(e, g)
                .map_err(|_| Error::Diverged { iteration, loss })?;
        }
    }

    Ok(TrainOutcome {
        params,
        embedding,
        loss_history: history,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        flops,
    })
}
