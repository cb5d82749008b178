//! Reverse-mode automatic differentiation over dense 2-D arrays.
//!
//! A [`Tape`] records every primitive as it is evaluated. Calling
//! [`Tape::backward`] on a scalar replays the record in reverse and returns
//! the adjoint of every node. Tapes are cheap to build and are rebuilt for
//! each forward pass; nothing persists between iterations.
//!
//! Shape mismatches between operands are programmer errors and panic.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, Axis};

use super::Activation;
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    /// `x · wᵀ + b`, with `b` a single row broadcast over the batch.
    Linear { x: usize, w: usize, b: usize },
    Add(usize, usize),
    /// `a + scale · b`
    AddScaled { a: usize, b: usize, scale: f64 },
    Scale(usize, f64),
    Activate(usize, Activation),
    ConcatCols(Vec<usize>),
    BroadcastRows(usize),
    /// Row-major window of `src` starting at flat `offset`.
    View { src: usize, offset: usize },
    /// `scale · Σ (x − target)²`
    SqDist { x: usize, target: Array2<f64>, scale: f64 },
    /// Sum of 1×1 scalars.
    Sum(Vec<usize>),
}

#[derive(Debug)]
struct Node {
    value: Array2<f64>,
    op: Op,
}

/// Linear record of primitive operations.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    flops: u64,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            flops: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Floating-point operations performed so far (forward and backward).
    ///
    /// This is a deterministic work measure: it depends only on shapes, never
    /// on timing.
    pub fn flops(&self) -> u64 {
        self.flops
    }

    pub fn value(&self, var: Var) -> &Array2<f64> {
        &self.nodes[self.index_of(var)].value
    }

    /// Scalar value of a 1×1 variable.
    pub fn scalar(&self, var: Var) -> f64 {
        let v = self.value(var);
        assert_eq!(v.dim(), (1, 1), "scalar() on a non-scalar variable");
        v[[0, 0]]
    }

    fn index_of(&self, var: Var) -> usize {
        assert_eq!(var.tape, self.id, "variable recorded on a different tape");
        var.index
    }

    fn push(&mut self, value: Array2<f64>, op: Op) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node { value, op });
        Var {
            tape: self.id,
            index,
        }
    }

    /// Records an input. Gradients are reported for every leaf.
    pub fn leaf(&mut self, value: Array2<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A leaf holding a single row.
    pub fn row(&mut self, values: &[f64]) -> Var {
        let value = Array2::from_shape_vec((1, values.len()), values.to_vec())
            .expect("row shape is always valid");
        self.leaf(value)
    }

    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xi, wi, bi) = (self.index_of(x), self.index_of(w), self.index_of(b));
        let xv = &self.nodes[xi].value;
        let wv = &self.nodes[wi].value;
        let bv = &self.nodes[bi].value;
        assert_eq!(xv.ncols(), wv.ncols(), "linear: input width vs weight columns");
        assert_eq!(bv.dim(), (1, wv.nrows()), "linear: bias shape");
        let mut out = xv.dot(&wv.t());
        out += bv;
        self.flops += 2 * (xv.nrows() * xv.ncols() * wv.nrows()) as u64;
        self.push(
            out,
            Op::Linear {
                x: xi,
                w: wi,
                b: bi,
            },
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ai, bi) = (self.index_of(a), self.index_of(b));
        let out = &self.nodes[ai].value + &self.nodes[bi].value;
        self.flops += out.len() as u64;
        self.push(out, Op::Add(ai, bi))
    }

    pub fn add_scaled(&mut self, a: Var, b: Var, scale: f64) -> Var {
        let (ai, bi) = (self.index_of(a), self.index_of(b));
        let mut out = self.nodes[ai].value.clone();
        out.scaled_add(scale, &self.nodes[bi].value);
        self.flops += 2 * out.len() as u64;
        self.push(out, Op::AddScaled { a: ai, b: bi, scale })
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let ai = self.index_of(a);
        let out = &self.nodes[ai].value * factor;
        self.flops += out.len() as u64;
        self.push(out, Op::Scale(ai, factor))
    }

    pub fn activate(&mut self, a: Var, activation: Activation) -> Var {
        let ai = self.index_of(a);
        let out = self.nodes[ai].value.mapv(|z| activation.apply(z));
        self.flops += out.len() as u64;
        self.push(out, Op::Activate(ai, activation))
    }

    /// Horizontal concatenation. All parts must share their row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let indices: Vec<usize> = parts.iter().map(|&p| self.index_of(p)).collect();
        let views: Vec<_> = indices.iter().map(|&i| self.nodes[i].value.view()).collect();
        let out = ndarray::concatenate(Axis(1), &views).expect("concat_cols: row counts differ");
        self.push(out, Op::ConcatCols(indices))
    }

    /// Repeats a single-row variable `rows` times.
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Var {
        let ai = self.index_of(a);
        let src = &self.nodes[ai].value;
        assert_eq!(src.nrows(), 1, "broadcast_rows expects a single row");
        let out = src
            .broadcast((rows, src.ncols()))
            .expect("single row always broadcasts")
            .to_owned();
        self.push(out, Op::BroadcastRows(ai))
    }

    /// Reinterprets `rows · cols` consecutive entries of `src` (row-major,
    /// starting at `offset`) as a `rows × cols` matrix.
    pub fn view(&mut self, src: Var, offset: usize, rows: usize, cols: usize) -> Var {
        let si = self.index_of(src);
        let src_value = &self.nodes[si].value;
        assert!(offset + rows * cols <= src_value.len(), "view out of bounds");
        let flat: Vec<f64> = match src_value.as_slice() {
            Some(all) => all[offset..offset + rows * cols].to_vec(),
            None => src_value.iter().skip(offset).take(rows * cols).copied().collect(),
        };
        let out = Array2::from_shape_vec((rows, cols), flat).expect("view shape matches slice length");
        self.push(out, Op::View { src: si, offset })
    }

    /// `scale · Σ (x − target)²` as a 1×1 scalar.
    pub fn sq_dist(&mut self, x: Var, target: Array2<f64>, scale: f64) -> Var {
        let xi = self.index_of(x);
        let xv = &self.nodes[xi].value;
        assert_eq!(xv.dim(), target.dim(), "sq_dist: shape mismatch");
        let total: f64 = xv
            .iter()
            .zip(target.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        self.flops += 3 * xv.len() as u64;
        self.push(
            Array2::from_elem((1, 1), scale * total),
            Op::SqDist {
                x: xi,
                target,
                scale,
            },
        )
    }

    /// Sum of 1×1 scalars.
    pub fn sum(&mut self, terms: &[Var]) -> Var {
        let indices: Vec<usize> = terms.iter().map(|&t| self.index_of(t)).collect();
        let mut total = 0.0;
        for &i in &indices {
            let v = &self.nodes[i].value;
            assert_eq!(v.dim(), (1, 1), "sum expects scalar terms");
            total += v[[0, 0]];
        }
        self.push(Array2::from_elem((1, 1), total), Op::Sum(indices))
    }

    /// Computes d`loss`/d(node) for every node that `loss` depends on.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if loss.tape != self.id || loss.index >= self.nodes.len() {
            return Err(Error::ForeignVariable);
        }
        let (r, c) = self.nodes[loss.index].value.dim();
        if (r, c) != (1, 1) {
            return Err(Error::NonScalarLoss(r, c));
        }

        let mut grads: Vec<Option<Array2<f64>>> = vec![None; self.nodes.len()];
        grads[loss.index] = Some(Array2::ones((1, 1)));
        let mut flops = 0u64;

        for index in (0..=loss.index).rev() {
            let Some(g) = grads[index].take() else {
                continue;
            };
            let node = &self.nodes[index];
            match &node.op {
                Op::Leaf => {}
                Op::Linear { x, w, b } => {
                    let xv = &self.nodes[*x].value;
                    let wv = &self.nodes[*w].value;
                    flops += 4 * (xv.nrows() * xv.ncols() * wv.nrows()) as u64;
                    accumulate(&mut grads, *x, g.dot(wv));
                    accumulate(&mut grads, *w, g.t().dot(xv));
                    accumulate(&mut grads, *b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::AddScaled { a, b, scale } => {
                    accumulate(&mut grads, *b, &g * *scale);
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Scale(a, factor) => accumulate(&mut grads, *a, &g * *factor),
                Op::Activate(a, activation) => {
                    let mut local = node.value.mapv(|y| activation.derivative_from_output(y));
                    local *= &g;
                    flops += 2 * local.len() as u64;
                    accumulate(&mut grads, *a, local);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let width = self.nodes[p].value.ncols();
                        let part = g.slice(ndarray::s![.., start..start + width]).to_owned();
                        accumulate(&mut grads, p, part);
                        start += width;
                    }
                }
                Op::BroadcastRows(a) => {
                    accumulate(&mut grads, *a, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                Op::View { src, offset } => {
                    let shape = self.nodes[*src].value.dim();
                    let slot = grads[*src].get_or_insert_with(|| Array2::zeros(shape));
                    if !slot.is_standard_layout() {
                        *slot = slot.as_standard_layout().into_owned();
                    }
                    let flat = slot
                        .as_slice_mut()
                        .expect("gradient buffers are standard layout");
                    for (dst, v) in flat[*offset..offset + g.len()].iter_mut().zip(g.iter()) {
                        *dst += v;
                    }
                }
                Op::SqDist { x, target, scale } => {
                    let upstream = g[[0, 0]];
                    let mut local = &self.nodes[*x].value - target;
                    local *= 2.0 * scale * upstream;
                    flops += 2 * local.len() as u64;
                    accumulate(&mut grads, *x, local);
                }
                Op::Sum(terms) => {
                    for &t in terms {
                        accumulate(&mut grads, t, g.clone());
                    }
                }
            }
            grads[index] = Some(g);
        }

        self.flops += flops;
        Ok(Gradients {
            tape: self.id,
            grads,
        })
    }
}

fn accumulate(grads: &mut [Option<Array2<f64>>], index: usize, value: Array2<f64>) {
    match &mut grads[index] {
        Some(existing) => *existing += &value,
        slot @ None => *slot = Some(value),
    }
}

/// Adjoints produced by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    tape: u64,
    grads: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    /// Gradient with respect to `var`, or `None` when the loss does not
    /// depend on it.
    pub fn get(&self, var: Var) -> Option<&Array2<f64>> {
        assert_eq!(var.tape, self.tape, "variable recorded on a different tape");
        self.grads.get(var.index).and_then(Option::as_ref)
    }

    /// Flattened gradient with respect to `var`, zero-filled when the loss
    /// does not depend on it.
    pub fn flat(&self, var: Var, len: usize) -> Vec<f64> {
        match self.get(var) {
            Some(g) => {
                assert_eq!(g.len(), len, "gradient length");
                g.iter().copied().collect()
            }
            None => vec![0.0; len],
        }
    }
}
