//! Dense multilayer perceptrons over flat parameter vectors.
//!
//! A network's parameters live in a single [`ParamVector`]. The layout is
//! fixed by the [`Architecture`]: for each layer in order, the row-major
//! `out × in` weight matrix followed by the `out` biases. Hidden layers apply
//! the configured activation; the output layer is linear.

mod adam;
mod io;
mod tape;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::{AdamConfig, AdamState};
pub use io::{decode_f64s, encode_f64s, load_params, save_params, ParamManifest};
pub use tape::{Gradients, Tape, Var};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Exponential linear unit with α = 1.
    Elu,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Elu => {
                if z > 0.0 {
                    z
                } else {
                    z.exp_m1()
                }
            }
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    ///
    /// For ELU, `y ≤ 0` implies `dy/dz = exp(z) = y + 1`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Elu => {
                if y > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
}

/// Location of one dense layer inside a flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSlice {
    pub input: usize,
    pub output: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl Architecture {
    pub fn new(
        input_dim: usize,
        hidden_layers: Vec<usize>,
        output_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        let arch = Self {
            input_dim,
            hidden_layers,
            output_dim,
            activation,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArchitecture(
                "input and output dimensions must be at least 1".into(),
            ));
        }
        if self.hidden_layers.is_empty() {
            return Err(Error::InvalidArchitecture(
                "at least one hidden layer is required".into(),
            ));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::InvalidArchitecture(
                "hidden layer widths must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Widths of every layer boundary, input first and output last.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden_layers.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden_layers);
        w.push(self.output_dim);
        w
    }

    pub fn layers(&self) -> Vec<LayerSlice> {
        let widths = self.widths();
        let mut offset = 0;
        widths
            .windows(2)
            .map(|pair| {
                let (input, output) = (pair[0], pair[1]);
                let slice = LayerSlice {
                    input,
                    output,
                    weight_offset: offset,
                    bias_offset: offset + input * output,
                };
                offset += input * output + output;
                slice
            })
            .collect()
    }

    pub fn param_count(&self) -> usize {
        count_params(self)
    }
}

/// Σ over layers of `in · out + out`.
pub fn count_params(arch: &Architecture) -> usize {
    arch.widths()
        .windows(2)
        .map(|pair| pair[0] * pair[1] + pair[1])
        .sum()
}

/// Flat vector of trainable scalars.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn zeros(arch: &Architecture) -> Self {
        Self(vec![0.0; count_params(arch)])
    }

    /// Uniform initialization in `±1/√fan_in`, weights and biases alike.
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, rng: &mut R) -> Self {
        let mut values = Vec::with_capacity(count_params(arch));
        for layer in arch.layers() {
            let bound = 1.0 / (layer.input as f64).sqrt();
            for _ in 0..layer.input * layer.output + layer.output {
                values.push(rng.random_range(-bound..bound));
            }
        }
        Self(values)
    }

    pub fn from_vec(arch: &Architecture, values: Vec<f64>) -> Result<Self> {
        let expected = count_params(arch);
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                context: "parameter vector",
                expected,
                got: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("parameter {i} is not finite")));
        }
        Ok(Self(values))
    }

    /// Wraps raw values without an architecture check.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Per-layer weight and bias variables bound once per forward pass, so an
/// integrator can evaluate the same network many times without re-slicing.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    layers: Vec<(Var, Var)>,
    activation: Activation,
    input_dim: usize,
}

impl BoundMlp {
    /// Slices `params` (any variable holding `count_params(arch)` values in
    /// row-major order) into layer matrices.
    pub fn bind(tape: &mut Tape, arch: &Architecture, params: Var) -> Result<Self> {
        let len = tape.value(params).len();
        if len != count_params(arch) {
            return Err(Error::DimensionMismatch {
                context: "bound network parameters",
                expected: count_params(arch),
                got: len,
            });
        }
        let layers = arch
            .layers()
            .into_iter()
            .map(|l| {
                let w = tape.view(params, l.weight_offset, l.output, l.input);
                let b = tape.view(params, l.bias_offset, 1, l.output);
                (w, b)
            })
            .collect();
        Ok(Self {
            layers,
            activation: arch.activation,
            input_dim: arch.input_dim,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    /// Applies the network to a batch (one sample per row).
    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let width = tape.value(x).ncols();
        if width != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim,
                got: width,
            });
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.linear(h, w, b);
            if i < last {
                h = tape.activate(h, self.activation);
            }
        }
        Ok(h)
    }
}

/// Evaluates the network on a single input.
///
/// When a tape is supplied the pass is recorded on it and the returned
/// variables (parameters, output) can be used for a backward pass.
pub fn mlp_forward(
    params: &ParamVector,
    arch: &Architecture,
    x: &[f64],
    tape: Option<&mut Tape>,
) -> Result<Vec<f64>> {
    if x.len() != arch.input_dim {
        return Err(Error::DimensionMismatch {
            context: "network input",
            expected: arch.input_dim,
            got: x.len(),
        });
    }
    let mut local;
    let tape = match tape {
        Some(t) => t,
        None => {
            local = Tape::new();
            &mut local
        }
    };
    let theta = tape.row(params.as_slice());
    let net = BoundMlp::bind(tape, arch, theta)?;
    let input = tape.row(x);
    let out = net.forward(tape, input)?;
    Ok(tape.value(out).iter().copied().collect())
}

/// Batch evaluation without recording gradients (rows are samples).
pub fn mlp_forward_batch(params: &ParamVector, arch: &Architecture, x: &Array2<f64>) -> Result<Array2<f64>> {
    let mut tape = Tape::new();
    let theta = tape.row(params.as_slice());
    let net = BoundMlp::bind(&mut tape, arch, theta)?;
    let input = tape.leaf(x.clone());
    let out = net.forward(&mut tape, input)?;
    Ok(tape.value(out).clone())
}
