//! Continual-learning strategies over NODE trajectory learners.
//!
//! Every strategy implements the same contract through [`Learner`]:
//! `learn_task` consumes the demonstrations of the next task, and
//! `predict(task_id, y0, timestamps)` reproduces any task learned so far.

mod hypernet;
mod importance;
mod persist;
mod replay;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, AdamConfig, AdamState, Architecture, ParamVector, Tape};
use crate::node::{
    demo_loss_on_tape, predict_node, train_node, DemonstrationSet, NodeConfig, Solver, Trajectory,
};

pub use hypernet::{generate_on_tape, hn_generate, hn_regularizer, HypernetConfig};
pub use importance::{
    mas_consolidate, penalty_with_grad, si_accumulate, si_consolidate, si_penalty, ImportanceState,
    MasPenalty, SiTracker,
};
pub use persist::FORMAT_VERSION;
pub use replay::TaskSelector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "SG")]
    Sg,
    #[serde(rename = "FT")]
    Ft,
    #[serde(rename = "REP")]
    Rep,
    #[serde(rename = "SI")]
    Si,
    #[serde(rename = "MAS")]
    Mas,
    #[serde(rename = "HN")]
    Hn,
    #[serde(rename = "CHN")]
    Chn,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Sg,
        Method::Ft,
        Method::Rep,
        Method::Si,
        Method::Mas,
        Method::Hn,
        Method::Chn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Sg => "SG",
            Method::Ft => "FT",
            Method::Rep => "REP",
            Method::Si => "SI",
            Method::Mas => "MAS",
            Method::Hn => "HN",
            Method::Chn => "CHN",
        }
    }

    /// Whether the NODE input carries a task embedding.
    pub fn embeds_in_node(self) -> bool {
        matches!(self, Method::Ft | Method::Rep | Method::Si | Method::Mas)
    }

    pub fn is_hypernetwork(self) -> bool {
        matches!(self, Method::Hn | Method::Chn)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown strategy '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub method: Method,
    pub state_dim: usize,
    pub node_hidden: Vec<usize>,
    /// Target NODE widths for HN (CHN always uses `node_hidden`).
    #[serde(default)]
    pub hn_target_hidden: Option<Vec<usize>>,
    pub activation: Activation,
    pub time_input: bool,
    #[serde(default)]
    pub solver: Solver,
    pub train_iterations: usize,
    pub learning_rate: f64,
    pub embedding_dim: usize,
    pub si_c: f64,
    pub si_xi: f64,
    pub mas_lambda: f64,
    pub hn_hidden: Vec<usize>,
    pub hn_beta: f64,
    pub chunk_dim: usize,
    pub chunk_embedding_dim: usize,
    pub seed: u64,
}

impl StrategyConfig {
    /// Full-size settings: NODE [1000]×3 (HN target [100]×3), embeddings of
    /// 256, hypernetwork [200]×3, chunks of 8192.
    pub fn paper(method: Method, state_dim: usize) -> Self {
        Self {
            method,
            state_dim,
            node_hidden: vec![1000; 3],
            hn_target_hidden: Some(vec![100; 3]),
            activation: Activation::Elu,
            time_input: true,
            solver: Solver::Euler,
            train_iterations: 15_000,
            learning_rate: 1e-4,
            embedding_dim: 256,
            si_c: 0.3,
            si_xi: 0.3,
            mas_lambda: 0.1,
            hn_hidden: vec![200; 3],
            hn_beta: 0.005,
            chunk_dim: 8192,
            chunk_embedding_dim: 256,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 {
            return Err(Error::InvalidInput("state dimension must be positive".into()));
        }
        if self.method != Method::Sg && self.embedding_dim == 0 {
            return Err(Error::InvalidInput("embedding_dim must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidInput("learning rate must be positive".into()));
        }
        match self.method {
            Method::Si if !(self.si_c > 0.0) => {
                Err(Error::InvalidInput("SI regularization constant must be positive".into()))
            }
            Method::Mas if !(self.mas_lambda > 0.0) => {
                Err(Error::InvalidInput("MAS regularization constant must be positive".into()))
            }
            Method::Hn | Method::Chn => self.hypernet_config().map(|_| ()),
            _ => self.node_config().and_then(|c| c.validate(self.state_dim, self.node_extra_dim())),
        }
    }

    fn node_extra_dim(&self) -> usize {
        if self.method.embeds_in_node() {
            self.embedding_dim
        } else {
            0
        }
    }

    /// The NODE this strategy integrates: the per-task network for SG, the
    /// shared network for FT/REP/SI/MAS, the generated target for HN/CHN.
    pub fn node_config(&self) -> Result<NodeConfig> {
        let hidden = match (self.method, &self.hn_target_hidden) {
            (Method::Hn, Some(h)) => h.clone(),
            _ => self.node_hidden.clone(),
        };
        let input = self.state_dim + self.node_extra_dim() + usize::from(self.time_input);
        Ok(NodeConfig {
            architecture: Architecture::new(input, hidden, self.state_dim, self.activation)?,
            time_input: self.time_input,
            train_iterations: self.train_iterations,
            learning_rate: self.learning_rate,
            solver: self.solver,
        })
    }

    pub fn hypernet_config(&self) -> Result<HypernetConfig> {
        let chunking = (self.method == Method::Chn).then_some((self.chunk_dim, self.chunk_embedding_dim));
        HypernetConfig::new(
            self.node_config()?.architecture,
            self.embedding_dim,
            self.hn_hidden.clone(),
            Activation::Relu,
            self.hn_beta,
            chunking,
        )
    }
}

/// Work done while learning one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub task_id: usize,
    pub loss_history: Vec<f64>,
    pub wall_clock_seconds: f64,
    /// Deterministic work measure (floating-point operations recorded on the
    /// autodiff tapes).
    pub flops: u64,
}

impl TaskReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.loss_history.last().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StrategyState {
    /// One frozen NODE per task.
    Sg { nodes: Vec<ParamVector> },
    /// One NODE shared across tasks, conditioned on task embeddings, with
    /// an optional importance regularizer (SI or MAS).
    Shared {
        theta: ParamVector,
        embeddings: Vec<Vec<f64>>,
        importance: Option<ImportanceState>,
    },
    /// Shared NODE trained on a buffer of every task's demonstrations.
    Replay {
        theta: ParamVector,
        embeddings: Vec<Vec<f64>>,
        buffer: Vec<DemonstrationSet>,
    },
    /// Hypernetwork weights (and chunk embeddings when chunked) plus task
    /// embeddings.
    Hyper { h: ParamVector, embeddings: Vec<Vec<f64>> },
}

/// Deterministic generator for `(task, purpose)` so that results do not
/// depend on how many random draws earlier tasks made.
pub(crate) fn rng_for(seed: u64, task: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ task.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(purpose);
    rng
}

const INIT_STREAM: u64 = 0;
const EMBEDDING_STREAM: u64 = 1;
const SELECTOR_STREAM: u64 = 2;
const SHARED_TASK: u64 = u64::MAX;

fn init_embedding(seed: u64, task: usize, dim: usize) -> Vec<f64> {
    let mut rng = rng_for(seed, task as u64, EMBEDDING_STREAM);
    (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// A strategy together with everything it has learned.
#[derive(Debug, Clone, PartialEq)]
pub struct Learner {
    config: StrategyConfig,
    state: StrategyState,
    tasks_learned: usize,
}

impl Learner {
    pub fn new(config: StrategyConfig) -> Result<Self> {
        config.validate()?;
        let mut init = rng_for(config.seed, SHARED_TASK, INIT_STREAM);
        let state = match config.method {
            Method::Sg => StrategyState::Sg { nodes: Vec::new() },
            Method::Ft | Method::Si | Method::Mas => {
                let node = config.node_config()?;
                let theta = ParamVector::init(&node.architecture, &mut init);
                let importance = match config.method {
                    Method::Si => Some(ImportanceState::new(theta.as_slice(), config.si_c, config.si_xi)),
                    Method::Mas => Some(ImportanceState::new(theta.as_slice(), config.mas_lambda, 0.0)),
                    _ => None,
                };
                StrategyState::Shared {
                    theta,
                    embeddings: Vec::new(),
                    importance,
                }
            }
            Method::Rep => {
                let node = config.node_config()?;
                StrategyState::Replay {
                    theta: ParamVector::init(&node.architecture, &mut init),
                    embeddings: Vec::new(),
                    buffer: Vec::new(),
                }
            }
            Method::Hn | Method::Chn => {
                let hn = config.hypernet_config()?;
                let mut h = ParamVector::init(&hn.hn_architecture, &mut init).into_vec();
                let chunk_count = hn.h_len() - h.len();
                h.extend((0..chunk_count).map(|_| init.random_range(-1.0..1.0)));
                StrategyState::Hyper {
                    h: ParamVector::from_raw(h),
                    embeddings: Vec::new(),
                }
            }
        };
        Ok(Self {
            config,
            state,
            tasks_learned: 0,
        })
    }

    pub(crate) fn from_parts(config: StrategyConfig, state: StrategyState, tasks_learned: usize) -> Self {
        Self {
            config,
            state,
            tasks_learned,
        }
    }

    pub fn config(&self) -> &StrategyConfig {
        &self.config
    }

    pub fn state(&self) -> &StrategyState {
        &self.state
    }

    pub fn method(&self) -> Method {
        self.config.method
    }

    pub fn tasks_learned(&self) -> usize {
        self.tasks_learned
    }

    /// Trainable parameters currently held, including task embeddings and
    /// chunk embeddings.
    pub fn param_count(&self) -> usize {
        match &self.state {
            StrategyState::Sg { nodes } => nodes.iter().map(ParamVector::len).sum(),
            StrategyState::Shared { theta, embeddings, .. } | StrategyState::Replay { theta, embeddings, .. } => {
                theta.len() + embeddings.iter().map(Vec::len).sum::<usize>()
            }
            StrategyState::Hyper { h, embeddings } => h.len() + embeddings.iter().map(Vec::len).sum::<usize>(),
        }
    }

    /// Demonstration points kept for rehearsal.
    pub fn stored_samples(&self) -> usize {
        match &self.state {
            StrategyState::Replay { buffer, .. } => buffer.iter().map(DemonstrationSet::point_count).sum(),
            _ => 0,
        }
    }

    pub fn embedding(&self, task_id: usize) -> Option<&[f64]> {
        match &self.state {
            StrategyState::Sg { .. } => None,
            StrategyState::Shared { embeddings, .. }
            | StrategyState::Replay { embeddings, .. }
            | StrategyState::Hyper { embeddings, .. } => embeddings.get(task_id).map(Vec::as_slice),
        }
    }

    /// Learns the next task from its demonstrations.
    pub fn learn_task(&mut self, demos: &DemonstrationSet) -> Result<TaskReport> {
        if demos.dim() != self.config.state_dim {
            return Err(Error::DimensionMismatch {
                context: "demonstration state",
                expected: self.config.state_dim,
                got: demos.dim(),
            });
        }
        let task_id = self.tasks_learned;
        let started = Instant::now();
        let (loss_history, flops) = match self.config.method {
            Method::Sg => self.learn_sg(demos, task_id)?,
            Method::Ft | Method::Si | Method::Mas => self.learn_shared(demos, task_id)?,
            Method::Rep => self.learn_replay(demos, task_id)?,
            Method::Hn | Method::Chn => self.learn_hyper(demos, task_id)?,
        };
        self.tasks_learned += 1;
        Ok(TaskReport {
            task_id,
            loss_history,
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            flops,
        })
    }

    fn learn_sg(&mut self, demos: &DemonstrationSet, task_id: usize) -> Result<(Vec<f64>, u64)> {
        let node = self.config.node_config()?;
        let mut rng = rng_for(self.config.seed, task_id as u64, INIT_STREAM);
        let fresh = ParamVector::init(&node.architecture, &mut rng);
        let out = train_node(fresh, demos, &node, None, None)?;
        let StrategyState::Sg { nodes } = &mut self.state else {
            unreachable!("method and state agree")
        };
        nodes.push(out.params);
        Ok((out.loss_history, out.flops))
    }

    fn learn_shared(&mut self, demos: &DemonstrationSet, task_id: usize) -> Result<(Vec<f64>, u64)> {
        let node = self.config.node_config()?;
        let e = init_embedding(self.config.seed, task_id, self.config.embedding_dim);
        let method = self.config.method;
        let StrategyState::Shared {
            theta,
            embeddings,
            importance,
        } = &mut self.state
        else {
            unreachable!("method and state agree")
        };
        if let Some(imp) = importance.as_mut() {
            imp.snapshot(theta.as_slice());
        }
        let out = match (method, importance.as_mut()) {
            (Method::Si, Some(imp)) => {
                let mut hook = SiTracker(imp);
                train_node(theta.clone(), demos, &node, Some(e), Some(&mut hook))?
            }
            (Method::Mas, Some(imp)) => {
                let mut hook = MasPenalty(imp);
                train_node(theta.clone(), demos, &node, Some(e), Some(&mut hook))?
            }
            _ => train_node(theta.clone(), demos, &node, Some(e), None)?,
        };
        let e = out.embedding.expect("embedding is trained alongside the NODE");
        match (method, importance.as_mut()) {
            (Method::Si, Some(imp)) => si_consolidate(imp, out.params.as_slice()),
            (Method::Mas, Some(imp)) => {
                let samples = visited_inputs(demos, &e, node.time_input);
                mas_consolidate(imp, out.params.as_slice(), &node.architecture, &samples)?;
            }
            _ => {}
        }
        *theta = out.params;
        embeddings.push(e);
        Ok((out.loss_history, out.flops))
    }

    fn learn_replay(&mut self, demos: &DemonstrationSet, task_id: usize) -> Result<(Vec<f64>, u64)> {
        let node = self.config.node_config()?;
        let e = init_embedding(self.config.seed, task_id, self.config.embedding_dim);
        let mut selector = TaskSelector::new(rng_for(self.config.seed, task_id as u64, SELECTOR_STREAM));
        let StrategyState::Replay {
            theta,
            embeddings,
            buffer,
        } = &mut self.state
        else {
            unreachable!("method and state agree")
        };
        buffer.push(demos.clone());
        embeddings.push(e);
        replay::train(theta, embeddings, buffer, &node, &mut selector)
    }

    fn learn_hyper(&mut self, demos: &DemonstrationSet, task_id: usize) -> Result<(Vec<f64>, u64)> {
        let hn = self.config.hypernet_config()?;
        let node = self.config.node_config()?;
        let mut e = init_embedding(self.config.seed, task_id, self.config.embedding_dim);
        let StrategyState::Hyper { h, embeddings } = &mut self.state else {
            unreachable!("method and state agree")
        };
        let targets = embeddings
            .iter()
            .map(|old| hn_generate(h.as_slice(), old, &hn).map(ParamVector::into_vec))
            .collect::<Result<Vec<_>>>()?;
        let adam_cfg = AdamConfig::with_learning_rate(node.learning_rate);
        let mut adam_h = AdamState::new(adam_cfg, h.len());
        let mut adam_e = AdamState::new(adam_cfg, e.len());
        let mut history = Vec::with_capacity(node.train_iterations);
        let mut flops = 0u64;
        for iteration in 0..node.train_iterations {
            let mut tape = Tape::new();
            let hv = tape.row(h.as_slice());
            let ev = tape.row(&e);
            let theta = generate_on_tape(&mut tape, &hn, hv, ev)?;
            let loss = demo_loss_on_tape(&mut tape, &node.architecture, theta, demos, None, node.time_input, node.solver)?;
            let task_loss = tape.scalar(loss);
            let grads = tape.backward(loss)?;
            flops += tape.flops();
            let mut grad_h = grads.flat(hv, h.len());
            let grad_e = grads.flat(ev, e.len());
            let mut total = task_loss;
            if !targets.is_empty() {
                let delta_h = adam_h.candidate_step(&grad_h).map_err(|_| Error::Diverged {
                    iteration,
                    loss: task_loss,
                })?;
                let (reg, reg_grad, reg_flops) = hn_regularizer(&hn, h.as_slice(), &delta_h, embeddings, &targets)?;
                flops += reg_flops;
                total += reg;
                grad_h.iter_mut().zip(reg_grad).for_each(|(g, r)| *g += r);
            }
            if !total.is_finite() {
                return Err(Error::Diverged { iteration, loss: total });
            }
            history.push(total);
            adam_h
                .step(h.as_mut_slice(), &grad_h)
                .map_err(|_| Error::Diverged { iteration, loss: total })?;
            adam_e
                .step(&mut e, &grad_e)
                .map_err(|_| Error::Diverged { iteration, loss: total })?;
        }
        embeddings.push(e);
        Ok((history, flops))
    }

    /// The NODE parameters that reproduce `task_id`.
    pub fn task_params(&self, task_id: usize) -> Result<ParamVector> {
        if task_id >= self.tasks_learned {
            return Err(Error::UnknownTask(task_id));
        }
        match &self.state {
            StrategyState::Sg { nodes } => Ok(nodes[task_id].clone()),
            StrategyState::Shared { theta, .. } | StrategyState::Replay { theta, .. } => Ok(theta.clone()),
            StrategyState::Hyper { h, embeddings } => {
                hn_generate(h.as_slice(), &embeddings[task_id], &self.config.hypernet_config()?)
            }
        }
    }

    /// Reproduces task `task_id` from `y0` over `timestamps`.
    pub fn predict(&self, task_id: usize, y0: &[f64], timestamps: &[f64]) -> Result<Trajectory> {
        let params = self.task_params(task_id)?;
        let node = self.config.node_config()?;
        let extra = if self.config.method.embeds_in_node() {
            self.embedding(task_id)
        } else {
            None
        };
        predict_node(&params, &node, y0, timestamps, extra)
    }
}

/// Network inputs seen along the demonstrations: one row per demo and time
/// step, laid out as `[state | embedding | time]`.
pub fn visited_inputs(demos: &DemonstrationSet, embedding: &[f64], time_input: bool) -> Array2<f64> {
    let d = demos.dim();
    let width = d + embedding.len() + usize::from(time_input);
    let rows = demos.point_count();
    let mut out = Array2::zeros((rows, width));
    let mut r = 0;
    for demo in demos.demos() {
        for (t, &stamp) in demo.timestamps().iter().enumerate() {
            let mut row = out.row_mut(r);
            for (j, v) in demo.point(t).iter().enumerate() {
                row[j] = *v;
            }
            for (j, v) in embedding.iter().enumerate() {
                row[d + j] = *v;
            }
            if time_input {
                row[width - 1] = stamp;
            }
            r += 1;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::node::{normalized_timestamps, Trajectory};

    pub(crate) fn line_task(slope: f64, demos: usize) -> DemonstrationSet {
        let ts = normalized_timestamps(12, None);
        let sets = (0..demos)
            .map(|k| {
                let off = 0.02 * k as f64;
                let rows: Vec<Vec<f64>> = ts
                    .iter()
                    .map(|&t| vec![t + off, slope * t * (1.0 - 0.5 * t) + off])
                    .collect();
                Trajectory::from_rows(&rows, ts.clone()).unwrap()
            })
            .collect();
        DemonstrationSet::new(format!("line{slope}"), sets, None).unwrap()
    }

    pub(crate) fn tiny(method: Method) -> StrategyConfig {
        StrategyConfig {
            node_hidden: vec![8],
            hn_target_hidden: Some(vec![6]),
            train_iterations: 30,
            learning_rate: 5e-3,
            embedding_dim: 3,
            hn_hidden: vec![5],
            chunk_dim: 16,
            chunk_embedding_dim: 2,
            seed: 7,
            ..StrategyConfig::paper(method, 2)
        }
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
            assert_eq!(m.name().to_lowercase().parse::<Method>().unwrap(), m);
            let json = serde_json::to_string(&m).unwrap();
            assert_eq!(json, format!("\"{}\"", m.name()));
        }
        assert!("EWC".parse::<Method>().is_err());
    }

    #[test]
    fn growth_audit() {
        let tasks = [line_task(1.0, 2), line_task(-1.0, 2), line_task(0.5, 2)];
        for method in Method::ALL {
            let cfg = tiny(method);
            let per_task = match method {
                Method::Sg => cfg.node_config().unwrap().param_count(),
                _ => cfg.embedding_dim,
            };
            let mut learner = Learner::new(cfg).unwrap();
            let mut last = learner.param_count();
            for task in &tasks {
                learner.learn_task(task).unwrap();
                assert_eq!(learner.param_count() - last, per_task, "{method}");
                last = learner.param_count();
            }
        }
    }

    #[test]
    fn sg_earlier_tasks_are_frozen() {
        let mut learner = Learner::new(tiny(Method::Sg)).unwrap();
        learner.learn_task(&line_task(1.0, 2)).unwrap();
        let first = learner.task_params(0).unwrap();
        let ts = normalized_timestamps(12, None);
        let before = learner.predict(0, &[0.0, 0.0], &ts).unwrap();
        learner.learn_task(&line_task(-1.0, 2)).unwrap();
        learner.learn_task(&line_task(0.3, 2)).unwrap();
        let StrategyState::Sg { nodes } = learner.state() else { panic!() };
        assert_eq!(nodes.len(), 3);
        assert_eq!(learner.task_params(0).unwrap(), first);
        assert_eq!(learner.predict(0, &[0.0, 0.0], &ts).unwrap(), before);
    }

    #[test]
    fn prediction_starts_at_y0_and_rejects_unknown_tasks() {
        let ts = normalized_timestamps(12, None);
        for method in Method::ALL {
            let mut learner = Learner::new(tiny(method)).unwrap();
            assert!(matches!(learner.predict(0, &[0.1, 0.2], &ts), Err(Error::UnknownTask(0))));
            learner.learn_task(&line_task(1.0, 2)).unwrap();
            let p = learner.predict(0, &[0.1, 0.2], &ts).unwrap();
            assert_eq!(p.start(), vec![0.1, 0.2]);
            assert!(matches!(learner.predict(1, &[0.1, 0.2], &ts), Err(Error::UnknownTask(1))));
        }
    }

    #[test]
    fn training_reduces_loss_for_every_strategy() {
        for method in Method::ALL {
            let mut learner = Learner::new(tiny(method)).unwrap();
            let report = learner.learn_task(&line_task(1.0, 2)).unwrap();
            assert_eq!(report.loss_history.len(), 30);
            assert!(report.final_loss().unwrap() < report.loss_history[0], "{method}");
            assert!(report.flops > 0);
        }
    }

    #[test]
    fn replay_buffer_grows_by_one_task() {
        let mut learner = Learner::new(tiny(Method::Rep)).unwrap();
        for m in 0..3 {
            learner.learn_task(&line_task(m as f64, 2)).unwrap();
            let StrategyState::Replay { buffer, .. } = learner.state() else { panic!() };
            assert_eq!(buffer.len(), m + 1);
            assert_eq!(learner.stored_samples(), (m + 1) * 24);
        }
    }

    #[test]
    fn si_accumulates_importance() {
        let mut learner = Learner::new(tiny(Method::Si)).unwrap();
        learner.learn_task(&line_task(1.0, 2)).unwrap();
        let StrategyState::Shared { theta, importance: Some(imp), .. } = learner.state() else { panic!() };
        assert!(imp.omega.iter().all(|&o| o >= 0.0));
        assert!(imp.omega.iter().any(|&o| o > 0.0));
        assert_eq!(imp.theta_snapshot, theta.as_slice());
    }

    #[test]
    fn mas_accumulates_importance() {
        let mut learner = Learner::new(tiny(Method::Mas)).unwrap();
        learner.learn_task(&line_task(1.0, 2)).unwrap();
        let StrategyState::Shared { importance: Some(imp), .. } = learner.state() else { panic!() };
        assert!(imp.omega.iter().any(|&o| o > 0.0));
        assert!((imp.c - 0.1).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_result() {
        for method in [Method::Rep, Method::Chn] {
            let run = || {
                let mut l = Learner::new(tiny(method)).unwrap();
                l.learn_task(&line_task(1.0, 2)).unwrap();
                l.learn_task(&line_task(-1.0, 2)).unwrap();
                l
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn visited_inputs_layout() {
        let task = line_task(1.0, 2);
        let x = visited_inputs(&task, &[9.0, 8.0], true);
        assert_eq!(x.dim(), (24, 5));
        assert_eq!(x.row(13).to_vec(), {
            let p = task.demos()[1].point(1);
            vec![p[0], p[1], 9.0, 8.0, task.timestamps()[1]]
        });
    }

    #[test]
    fn paper_scale_parameter_counts() {
        let sg = StrategyConfig::paper(Method::Sg, 2);
        assert_eq!(sg.node_config().unwrap().param_count(), 2_008_002);
        let hn = StrategyConfig::paper(Method::Hn, 2).hypernet_config().unwrap();
        assert_eq!(hn.target_count(), 20_802);
        assert_eq!(hn.h_len(), 4_313_002);
        let chn = StrategyConfig::paper(Method::Chn, 2).hypernet_config().unwrap();
        assert_eq!(chn.num_chunks(), 246);
        assert_eq!(chn.h_len(), 1_829_592 + 246 * 256);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut c = tiny(Method::Ft);
        c.embedding_dim = 0;
        assert!(Learner::new(c).is_err());
        let mut c = tiny(Method::Hn);
        c.hn_beta = -1.0;
        assert!(Learner::new(c).is_err());
        let mut c = tiny(Method::Chn);
        c.chunk_dim = 0;
        assert!(Learner::new(c).is_err());
    }

    #[test]
    fn wrong_state_dimension_is_rejected() {
        let mut learner = Learner::new(StrategyConfig { state_dim: 3, ..tiny(Method::Ft) }).unwrap();
        assert!(matches!(learner.learn_task(&line_task(1.0, 2)), Err(Error::DimensionMismatch { .. })));
    }
}
