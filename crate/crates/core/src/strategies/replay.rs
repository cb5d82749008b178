//! Rehearsal with a uniform task selector.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, ParamVector};
use crate::node::{node_loss_and_grad, DemonstrationSet, NodeConfig};

/// Draws the task to rehearse at each iteration, uniformly over the tasks
/// seen so far.
#[derive(Debug, Clone)]
pub struct TaskSelector {
    rng: ChaCha8Rng,
}

impl TaskSelector {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }

    pub fn select(&mut self, num_tasks: usize) -> usize {
        self.rng.random_range(0..num_tasks)
    }
}

/// Runs the fixed iteration budget, each step on one selected task and its
/// embedding.
pub(super) fn train(
    theta: &mut ParamVector,
    embeddings: &mut [Vec<f64>],
    buffer: &[DemonstrationSet],
    node: &NodeConfig,
    selector: &mut TaskSelector,
) -> Result<(Vec<f64>, u64)> {
    let adam_cfg = AdamConfig::with_learning_rate(node.learning_rate);
    let mut adam = AdamState::new(adam_cfg, theta.len());
    let mut adam_e: Vec<AdamState> = embeddings.iter().map(|e| AdamState::new(adam_cfg, e.len())).collect();
    let mut history = Vec::with_capacity(node.train_iterations);
    let mut flops = 0u64;
    for iteration in 0..node.train_iterations {
        let l = selector.select(buffer.len());
        let lg = node_loss_and_grad(theta, node, &buffer[l], Some(&embeddings[l]))?;
        flops += lg.flops;
        if !lg.loss.is_finite() {
            return Err(Error::Diverged { iteration, loss: lg.loss });
        }
        history.push(lg.loss);
        let diverged = |_| Error::Diverged { iteration, loss: lg.loss };
        adam.step(theta.as_mut_slice(), &lg.params).map_err(diverged)?;
        if let Some(g) = &lg.embedding {
            adam_e[l].step(&mut embeddings[l], g).map_err(diverged)?;
        }
    }
    Ok((history, flops))
}
