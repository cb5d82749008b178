//! Hypernetworks that emit the parameters of a target NODE, optionally in
//! chunks.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Architecture, BoundMlp, ParamVector, Tape, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypernetConfig {
    /// Input is the task embedding (plus the chunk embedding when chunked);
    /// output is the target parameter count, or `chunk_dim` when chunked.
    pub hn_architecture: Architecture,
    pub target_architecture: Architecture,
    pub beta: f64,
    pub chunked: bool,
    pub chunk_dim: usize,
    pub chunk_embedding_dim: usize,
}

impl HypernetConfig {
    /// Builds the hypernetwork architecture for a target network.
    pub fn new(
        target_architecture: Architecture,
        embedding_dim: usize,
        hidden_layers: Vec<usize>,
        activation: crate::nn::Activation,
        beta: f64,
        chunking: Option<(usize, usize)>,
    ) -> Result<Self> {
        let target = target_architecture.param_count();
        let (input, output, chunked, chunk_dim, chunk_embedding_dim) = match chunking {
            Some((chunk_dim, chunk_embedding_dim)) => (
                embedding_dim + chunk_embedding_dim,
                chunk_dim,
                true,
                chunk_dim,
                chunk_embedding_dim,
            ),
            None => (embedding_dim, target, false, 0, 0),
        };
        let cfg = Self {
            hn_architecture: Architecture::new(input, hidden_layers, output, activation)?,
            target_architecture,
            beta,
            chunked,
            chunk_dim,
            chunk_embedding_dim,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hn_architecture.validate()?;
        self.target_architecture.validate()?;
        if !(self.beta > 0.0) {
            return Err(Error::InvalidInput(format!("beta must be positive, got {}", self.beta)));
        }
        let expected_out = if self.chunked {
            if self.chunk_dim == 0 {
                return Err(Error::InvalidInput("chunk_dim must be at least 1".into()));
            }
            self.chunk_dim
        } else {
            self.target_count()
        };
        if self.hn_architecture.output_dim != expected_out {
            return Err(Error::DimensionMismatch {
                context: "hypernetwork output",
                expected: expected_out,
                got: self.hn_architecture.output_dim,
            });
        }
        if self.hn_architecture.input_dim <= self.chunk_embedding_dim {
            return Err(Error::InvalidArchitecture("hypernetwork has no room for the task embedding".into()));
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        self.hn_architecture.input_dim - self.chunk_embedding_dim
    }

    pub fn target_count(&self) -> usize {
        self.target_architecture.param_count()
    }

    pub fn num_chunks(&self) -> usize {
        if self.chunked {
            self.target_count().div_ceil(self.chunk_dim)
        } else {
            0
        }
    }

    pub fn mlp_count(&self) -> usize {
        self.hn_architecture.param_count()
    }

    /// Length of `h`: hypernetwork weights followed by the shared chunk
    /// embeddings.
    pub fn h_len(&self) -> usize {
        self.mlp_count() + self.num_chunks() * self.chunk_embedding_dim
    }
}

/// Records the generation of target parameters on a tape. `h` and `e` are
/// single-row variables; the result is `1 × target_count`.
pub fn generate_on_tape(tape: &mut Tape, cfg: &HypernetConfig, h: Var, e: Var) -> Result<Var> {
    let bound = BoundHypernet::bind(tape, cfg, h)?;
    bound.emit(tape, cfg, e)
}

/// Hypernetwork weights and chunk embeddings viewed once on a tape, so that
/// several embeddings can share them.
struct BoundHypernet {
    net: BoundMlp,
    chunk_embs: Option<Var>,
}

impl BoundHypernet {
    fn bind(tape: &mut Tape, cfg: &HypernetConfig, h: Var) -> Result<Self> {
        let h_len = tape.value(h).len();
        if h_len != cfg.h_len() {
            return Err(Error::DimensionMismatch {
                context: "hypernetwork parameters",
                expected: cfg.h_len(),
                got: h_len,
            });
        }
        if !cfg.chunked {
            return Ok(Self {
                net: BoundMlp::bind(tape, &cfg.hn_architecture, h)?,
                chunk_embs: None,
            });
        }
        let mlp_params = tape.view(h, 0, 1, cfg.mlp_count());
        let net = BoundMlp::bind(tape, &cfg.hn_architecture, mlp_params)?;
        let chunk_embs = tape.view(h, cfg.mlp_count(), cfg.num_chunks(), cfg.chunk_embedding_dim);
        Ok(Self {
            net,
            chunk_embs: Some(chunk_embs),
        })
    }

    /// Unchunked networks accept several embeddings at once, one per row.
    fn emit(&self, tape: &mut Tape, cfg: &HypernetConfig, e: Var) -> Result<Var> {
        let e_len = tape.value(e).ncols();
        if e_len != cfg.embedding_dim() {
            return Err(Error::DimensionMismatch {
                context: "task embedding",
                expected: cfg.embedding_dim(),
                got: e_len,
            });
        }
        let Some(chunk_embs) = self.chunk_embs else {
            return self.net.forward(tape, e);
        };
        let k = cfg.num_chunks();
        let task = tape.broadcast_rows(e, k);
        let input = tape.concat_cols(&[task, chunk_embs]);
        let chunks = self.net.forward(tape, input)?;
        Ok(tape.view(chunks, 0, 1, cfg.target_count()))
    }
}

/// θ = f_h(e).
pub fn hn_generate(h: &[f64], e: &[f64], cfg: &HypernetConfig) -> Result<ParamVector> {
    let mut tape = Tape::new();
    let hv = tape.row(h);
    let ev = tape.row(e);
    let out = generate_on_tape(&mut tape, cfg, hv, ev)?;
    Ok(ParamVector::from_raw(tape.value(out).iter().copied().collect()))
}

/// Output-preserving regularizer on `h + Δh`:
/// `β / max(m − 1, 1) · Σ_l ‖target_l − f_{h+Δh}(e_l)‖²`.
///
/// Returns the value, the gradient with respect to `h` (Δh held fixed) and
/// the tape's flop count.
pub fn hn_regularizer(
    cfg: &HypernetConfig,
    h: &[f64],
    delta_h: &[f64],
    embeddings: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(f64, Vec<f64>, u64)> {
    if embeddings.len() != targets.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} embeddings but {} targets",
            embeddings.len(),
            targets.len()
        )));
    }
    if embeddings.is_empty() {
        return Ok((0.0, vec![0.0; h.len()], 0));
    }
    let m = embeddings.len();
    let weight = cfg.beta / (m.saturating_sub(1).max(1)) as f64;
    let shifted: Vec<f64> = h.iter().zip(delta_h).map(|(a, b)| a + b).collect();
    let mut tape = Tape::new();
    let hv = tape.row(&shifted);
    let bound = BoundHypernet::bind(&mut tape, cfg, hv)?;
    let stack = |rows: &[Vec<f64>]| {
        let width = rows[0].len();
        Array2::from_shape_vec((rows.len(), width), rows.concat()).map_err(|e| Error::ShapeMismatch(e.to_string()))
    };
    let mut terms = Vec::with_capacity(m);
    if cfg.chunked {
        for (e, target) in embeddings.iter().zip(targets) {
            let ev = tape.row(e);
            let theta = bound.emit(&mut tape, cfg, ev)?;
            terms.push(tape.sq_dist(theta, stack(std::slice::from_ref(target))?, weight));
        }
    } else {
        // all old tasks in one batch
        let ev = tape.leaf(stack(embeddings)?);
        let thetas = bound.emit(&mut tape, cfg, ev)?;
        terms.push(tape.sq_dist(thetas, stack(targets)?, weight));
    }
    let total = tape.sum(&terms);
    let value = tape.scalar(total);
    let grads = tape.backward(total)?;
    Ok((value, grads.flat(hv, h.len()), tape.flops()))
}
