//! Experiment configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{ensure, Context, Result};
use serde::{Deserialize, Serialize};

use clfd_core::nn::Activation;
use clfd_core::node::Solver;
use clfd_core::strategies::{Method, StrategyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NodeVariant {
    /// Time appended to the network input.
    #[default]
    #[serde(rename = "NODE-T")]
    NodeT,
    /// Autonomous vector field.
    #[serde(rename = "NODE-I")]
    NodeI,
}

/// What the time-efficiency metric measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeMeasure {
    /// Floating-point operations recorded during training. Deterministic.
    #[default]
    Flops,
    /// Wall-clock seconds. Varies between runs.
    WallClock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub node_hidden: Vec<usize>,
    pub hn_target_hidden: Option<Vec<usize>>,
    pub activation: Activation,
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
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Self::desk()
    }
}

impl Hyperparameters {
    /// Small networks and budgets that train on a laptop CPU in minutes.
    pub fn desk() -> Self {
        Self {
            node_hidden: vec![64, 64],
            hn_target_hidden: None,
            activation: Activation::Elu,
            solver: Solver::Euler,
            train_iterations: 2000,
            learning_rate: 5e-3,
            embedding_dim: 16,
            si_c: 0.3,
            si_xi: 0.3,
            mas_lambda: 0.1,
            hn_hidden: vec![32, 32],
            hn_beta: 0.05,
            chunk_dim: 512,
            chunk_embedding_dim: 8,
        }
    }

    /// Full-size settings for 2-D handwriting datasets.
    pub fn paper() -> Self {
        let p = StrategyConfig::paper(Method::Sg, 2);
        Self {
            node_hidden: p.node_hidden,
            hn_target_hidden: p.hn_target_hidden,
            activation: p.activation,
            solver: p.solver,
            train_iterations: p.train_iterations,
            learning_rate: p.learning_rate,
            embedding_dim: p.embedding_dim,
            si_c: p.si_c,
            si_xi: p.si_xi,
            mas_lambda: p.mas_lambda,
            hn_hidden: p.hn_hidden,
            hn_beta: p.hn_beta,
            chunk_dim: p.chunk_dim,
            chunk_embedding_dim: p.chunk_embedding_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    #[serde(default)]
    pub node_variant: NodeVariant,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Permutation of the dataset's tasks; identity when absent.
    #[serde(default)]
    pub task_order: Option<Vec<usize>>,
    /// Points per demonstration after subsampling.
    #[serde(default = "default_subsample")]
    pub subsample_steps: Option<usize>,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Position accuracy threshold: this times the largest inter-demo DTW.
    #[serde(default = "default_multiplier")]
    pub threshold_multiplier: f64,
    /// Orientation accuracy threshold in degrees (mean absolute error).
    #[serde(default = "default_orientation_threshold")]
    pub orientation_threshold_deg: f64,
    #[serde(default)]
    pub time_measure: TimeMeasure,
    /// Keep a learner snapshot after every task (needed by `eval`).
    #[serde(default = "default_true")]
    pub save_snapshots: bool,
    /// Write predicted trajectories of every task after the last one.
    #[serde(default = "default_true")]
    pub save_predictions: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_subsample() -> Option<usize> {
    Some(100)
}

fn default_multiplier() -> f64 {
    3.0
}

fn default_orientation_threshold() -> f64 {
    10.0
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn desk(methods: &[Method]) -> Self {
        Self {
            methods: methods.to_vec(),
            node_variant: NodeVariant::NodeT,
            hyperparameters: Hyperparameters::desk(),
            seeds: default_seeds(),
            task_order: None,
            subsample_steps: default_subsample(),
            dataset: None,
            output_dir: None,
            threshold_multiplier: default_multiplier(),
            orientation_threshold_deg: default_orientation_threshold(),
            time_measure: TimeMeasure::Flops,
            save_snapshots: true,
            save_predictions: true,
        }
    }

    pub fn paper(methods: &[Method]) -> Self {
        Self {
            hyperparameters: Hyperparameters::paper(),
            subsample_steps: None,
            ..Self::desk(methods)
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(!self.methods.is_empty(), "methods: at least one method is required");
        ensure!(!self.seeds.is_empty(), "seeds: at least one seed is required");
        ensure!(
            self.threshold_multiplier > 0.0,
            "threshold_multiplier: must be positive"
        );
        ensure!(
            self.orientation_threshold_deg > 0.0,
            "orientation_threshold_deg: must be positive"
        );
        for &m in &self.methods {
            self.strategy_config(m, 2, 0).validate()?;
        }
        Ok(())
    }

    pub fn strategy_config(&self, method: Method, state_dim: usize, seed: u64) -> StrategyConfig {
        let h = &self.hyperparameters;
        StrategyConfig {
            method,
            state_dim,
            node_hidden: h.node_hidden.clone(),
            hn_target_hidden: h.hn_target_hidden.clone(),
            activation: h.activation,
            time_input: self.node_variant == NodeVariant::NodeT,
            solver: h.solver,
            train_iterations: h.train_iterations,
            learning_rate: h.learning_rate,
            embedding_dim: h.embedding_dim,
            si_c: h.si_c,
            si_xi: h.si_xi,
            mas_lambda: h.mas_lambda,
            hn_hidden: h.hn_hidden.clone(),
            hn_beta: h.hn_beta,
            chunk_dim: h.chunk_dim,
            chunk_embedding_dim: h.chunk_embedding_dim,
            seed,
        }
    }
}
