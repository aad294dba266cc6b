//! Tape-based reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation applied to its [`Var`]s. Nodes are
//! appended in evaluation order, so the tape is already topologically sorted
//! and [`Var::backward`] only has to walk it from the end once.
//!
//! ```
//! use vgnae::autodiff::Tape;
//! use vgnae::Matrix;
//!
//! let tape = Tape::new();
//! let w = tape.param(Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap());
//! let x = tape.constant(Matrix::from_rows(&[vec![3.0], vec![4.0]]).unwrap());
//! let y = w.matmul(x).unwrap(); // 1x1: 1*3 + 2*4
//! let grads = y.backward().unwrap();
//! assert_eq!(y.value().get(0, 0), 11.0);
//! assert_eq!(grads.get(w).unwrap().as_slice(), &[3.0, 4.0]);
//! ```

use std::cell::RefCell;
use std::rc::Rc;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::graph::{Edge, NormalizedAdjacency};
use crate::matrix::{dot, norm, Matrix};

/// Rows whose norm falls below this cannot be L2-normalized.
pub const MIN_ROW_NORM: f64 = 1e-12;

/// Pointwise nonlinearities with a matching backward rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Sigmoid,
    Relu,
    Exp,
}

#[derive(Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Spmm(Arc<NormalizedAdjacency>, usize),
    RowNormalize { input: usize, scale: f64, norms: Vec<f64> },
    Unary(Elementwise, usize),
    Softplus(usize),
    Clamp { input: usize, lo: f64, hi: f64 },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Sum(usize),
    Mean(usize),
    PairDot { input: usize, pairs: Rc<[Edge]> },
}

struct Node {
    value: Rc<Matrix>,
    requires_grad: bool,
    op: Op,
}

/// Records operations for a single forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Leaf that gradients are accumulated for.
    pub fn param(&self, value: Matrix) -> Var<'_> {
        self.push(value, true, Op::Leaf)
    }

    /// Leaf treated as a constant; no gradient is computed for it.
    pub fn constant(&self, value: Matrix) -> Var<'_> {
        self.push(value, false, Op::Leaf)
    }

    /// Constant leaf sharing an existing buffer, e.g. a feature matrix reused
    /// across epochs.
    pub fn constant_shared(&self, value: Rc<Matrix>) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            requires_grad: false,
            op: Op::Leaf,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Matrix, requires_grad: bool, op: Op) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            requires_grad,
            op,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn value(&self, id: usize) -> Rc<Matrix> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    fn requires_grad(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Rc<Matrix> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().shape()
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn derived(&self, value: Matrix, parents: &[usize], op: Op) -> Var<'t> {
        let requires_grad = parents.iter().any(|&p| self.tape.requires_grad(p));
        self.tape.push(value, requires_grad, op)
    }

    fn check_same_tape(&self, other: Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars belong to different tapes"
        );
    }

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.check_same_tape(rhs);
        let value = self.value().matmul(&rhs.value())?;
        Ok(self.derived(value, &[self.id, rhs.id], Op::MatMul(self.id, rhs.id)))
    }

    /// `adj · self`, with `adj` a constant.
    pub fn spmm(self, adj: &Arc<NormalizedAdjacency>) -> Result<Var<'t>> {
        let value = adj.spmm(&self.value())?;
        Ok(self.derived(value, &[self.id], Op::Spmm(Arc::clone(adj), self.id)))
    }

    /// Rescales every row to norm `scale`. Fails on rows with norm below
    /// [`MIN_ROW_NORM`].
    pub fn row_l2_normalize(self, scale: f64) -> Result<Var<'t>> {
        let h = self.value();
        let norms = h.row_norms();
        if let Some((row, &norm)) = norms.iter().enumerate().find(|(_, &n)| !(n >= MIN_ROW_NORM)) {
            return Err(Error::DegenerateRow { row, norm });
        }
        let mut out = (*h).clone();
        for (i, &nrm) in norms.iter().enumerate() {
            let k = scale / nrm;
            out.row_mut(i).iter_mut().for_each(|x| *x *= k);
        }
        Ok(self.derived(
            out,
            &[self.id],
            Op::RowNormalize {
                input: self.id,
                scale,
                norms,
            },
        ))
    }

    pub fn elementwise(self, kind: Elementwise) -> Var<'t> {
        let x = self.value();
        let value = match kind {
            Elementwise::Sigmoid => x.map(sigmoid),
            Elementwise::Relu => x.map(|v| v.max(0.0)),
            Elementwise::Exp => x.map(f64::exp),
        };
        self.derived(value, &[self.id], Op::Unary(kind, self.id))
    }

    pub fn sigmoid(self) -> Var<'t> {
        self.elementwise(Elementwise::Sigmoid)
    }

    pub fn relu(self) -> Var<'t> {
        self.elementwise(Elementwise::Relu)
    }

    pub fn exp(self) -> Var<'t> {
        self.elementwise(Elementwise::Exp)
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(self) -> Var<'t> {
        let value = self.value().map(softplus);
        self.derived(value, &[self.id], Op::Softplus(self.id))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero outside the interval.
    pub fn clamp(self, lo: f64, hi: f64) -> Var<'t> {
        let value = self.value().map(|x| x.clamp(lo, hi));
        self.derived(
            value,
            &[self.id],
            Op::Clamp {
                input: self.id,
                lo,
                hi,
            },
        )
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.check_same_tape(rhs);
        let value = self.value().zip_map(&rhs.value(), |a, b| a + b)?;
        Ok(self.derived(value, &[self.id, rhs.id], Op::Add(self.id, rhs.id)))
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.check_same_tape(rhs);
        let value = self.value().zip_map(&rhs.value(), |a, b| a - b)?;
        Ok(self.derived(value, &[self.id, rhs.id], Op::Sub(self.id, rhs.id)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        self.check_same_tape(rhs);
        let value = self.value().zip_map(&rhs.value(), |a, b| a * b)?;
        Ok(self.derived(value, &[self.id, rhs.id], Op::Mul(self.id, rhs.id)))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let value = self.value().scale(c);
        self.derived(value, &[self.id], Op::Scale(self.id, c))
    }

    pub fn add_scalar(self, c: f64) -> Var<'t> {
        let value = self.value().map(|x| x + c);
        self.derived(value, &[self.id], Op::AddScalar(self.id))
    }

    /// Sum of all entries as a 1×1 var.
    pub fn sum(self) -> Var<'t> {
        let value = Matrix::filled(1, 1, self.value().sum());
        self.derived(value, &[self.id], Op::Sum(self.id))
    }

    /// Mean of all entries as a 1×1 var.
    pub fn mean(self) -> Var<'t> {
        let x = self.value();
        let value = Matrix::filled(1, 1, x.sum() / x.len() as f64);
        self.derived(value, &[self.id], Op::Mean(self.id))
    }

    /// Column vector of row inner products `⟨self_u, self_v⟩` for each pair.
    pub fn pair_dot(self, pairs: &[Edge]) -> Result<Var<'t>> {
        let z = self.value();
        if let Some(&(u, v)) = pairs.iter().find(|&&(u, v)| u >= z.rows() || v >= z.rows()) {
            return Err(Error::Input(format!(
                "pair ({u}, {v}) out of range for {} rows",
                z.rows()
            )));
        }
        let scores: Vec<f64> = pairs
            .iter()
            .map(|&(u, v)| dot(z.row(u), z.row(v)))
            .collect();
        let value = Matrix::from_vec(pairs.len(), 1, scores)?;
        Ok(self.derived(
            value,
            &[self.id],
            Op::PairDot {
                input: self.id,
                pairs: pairs.into(),
            },
        ))
    }

    /// Back-propagates from this 1×1 var through the whole tape.
    pub fn backward(self) -> Result<Gradients> {
        if self.shape() != (1, 1) {
            return Err(Error::Shape {
                op: "backward",
                lhs: self.shape(),
                rhs: (1, 1),
            });
        }
        let nodes = self.tape.nodes.borrow();
        let mut grads: Vec<Option<Matrix>> = vec![None; nodes.len()];
        grads[self.id] = Some(Matrix::filled(1, 1, 1.0));

        for id in (0..=self.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let wants = |p: usize| nodes[p].requires_grad;
            let send = |p: usize, d: Matrix, grads: &mut Vec<Option<Matrix>>| {
                match &mut grads[p] {
                    Some(acc) => acc.add_assign(&d).expect("gradient shape"),
                    slot @ None => *slot = Some(d),
                }
            };
            match &node.op {
                Op::Leaf => {
                    grads[id] = Some(g);
                }
                Op::MatMul(a, b) => {
                    if wants(*a) {
                        let d = g.matmul_transposed(&nodes[*b].value)?;
                        send(*a, d, &mut grads);
                    }
                    if wants(*b) {
                        let d = nodes[*a].value.transpose_matmul(&g)?;
                        send(*b, d, &mut grads);
                    }
                }
                Op::Spmm(adj, a) => {
                    // the normalized adjacency is symmetric
                    send(*a, adj.spmm(&g)?, &mut grads);
                }
                Op::RowNormalize { input, scale, norms } => {
                    let out = &node.value;
                    let mut d = Matrix::zeros(g.rows(), g.cols());
                    for (i, &nrm) in norms.iter().enumerate() {
                        let unit: Vec<f64> = out.row(i).iter().map(|x| x / scale).collect();
                        let proj = dot(&unit, g.row(i));
                        let k = scale / nrm;
                        for ((o, &gi), &ui) in d.row_mut(i).iter_mut().zip(g.row(i)).zip(&unit) {
                            *o = k * (gi - ui * proj);
                        }
                    }
                    send(*input, d, &mut grads);
                }
                Op::Unary(kind, a) => {
                    let y = &node.value;
                    let d = match kind {
                        Elementwise::Sigmoid => g.zip_map(y, |gi, s| gi * s * (1.0 - s))?,
                        Elementwise::Relu => g.zip_map(y, |gi, r| if r > 0.0 { gi } else { 0.0 })?,
                        Elementwise::Exp => g.zip_map(y, |gi, e| gi * e)?,
                    };
                    send(*a, d, &mut grads);
                }
                Op::Softplus(a) => {
                    let d = g.zip_map(&nodes[*a].value, |gi, x| gi * sigmoid(x))?;
                    send(*a, d, &mut grads);
                }
                Op::Clamp { input, lo, hi } => {
                    let d = g.zip_map(&nodes[*input].value, |gi, x| {
                        if x >= *lo && x <= *hi {
                            gi
                        } else {
                            0.0
                        }
                    })?;
                    send(*input, d, &mut grads);
                }
                Op::Add(a, b) => {
                    if wants(*a) {
                        send(*a, g.clone(), &mut grads);
                    }
                    if wants(*b) {
                        send(*b, g, &mut grads);
                    }
                }
                Op::Sub(a, b) => {
                    if wants(*a) {
                        send(*a, g.clone(), &mut grads);
                    }
                    if wants(*b) {
                        send(*b, g.scale(-1.0), &mut grads);
                    }
                }
                Op::Mul(a, b) => {
                    if wants(*a) {
                        send(*a, g.zip_map(&nodes[*b].value, |gi, y| gi * y)?, &mut grads);
                    }
                    if wants(*b) {
                        send(*b, g.zip_map(&nodes[*a].value, |gi, x| gi * x)?, &mut grads);
                    }
                }
                Op::Scale(a, c) => send(*a, g.scale(*c), &mut grads),
                Op::AddScalar(a) => send(*a, g, &mut grads),
                Op::Sum(a) => {
                    let (r, c) = nodes[*a].value.shape();
                    send(*a, Matrix::filled(r, c, g.get(0, 0)), &mut grads);
                }
                Op::Mean(a) => {
                    let (r, c) = nodes[*a].value.shape();
                    let k = g.get(0, 0) / (r * c) as f64;
                    send(*a, Matrix::filled(r, c, k), &mut grads);
                }
                Op::PairDot { input, pairs } => {
                    let z = &nodes[*input].value;
                    let mut d = Matrix::zeros(z.rows(), z.cols());
                    for (k, &(u, v)) in pairs.iter().enumerate() {
                        let gk = g.get(k, 0);
                        for j in 0..z.cols() {
                            let (zu, zv) = (z.get(u, j), z.get(v, j));
                            d.row_mut(u)[j] += gk * zv;
                            d.row_mut(v)[j] += gk * zu;
                        }
                    }
                    send(*input, d, &mut grads);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

/// Gradients of a scalar with respect to every leaf that required them.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, var: Var<'_>) -> Option<&Matrix> {
        self.grads.get(var.id).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var<'_>) -> Option<Matrix> {
        self.grads.get_mut(var.id).and_then(Option::take)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Row-wise `scale · h_i / ‖h_i‖` without a tape.
pub fn row_l2_normalize(h: &Matrix, scale: f64) -> Result<Matrix> {
    let mut out = h.clone();
    for i in 0..h.rows() {
        let nrm = norm(h.row(i));
        if !(nrm >= MIN_ROW_NORM) {
            return Err(Error::DegenerateRow { row: i, norm: nrm });
        }
        let k = scale / nrm;
        out.row_mut(i).iter_mut().for_each(|x| *x *= k);
    }
    Ok(out)
}
