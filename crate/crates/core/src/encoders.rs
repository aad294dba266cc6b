//! Graph encoders: the two-layer GCN and the single-layer normalized
//! convolution (GNCN) that rescales transformed features to a fixed norm
//! before propagating them.

use std::sync::Arc;

use rand::Rng;

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::graph::NormalizedAdjacency;
use crate::matrix::Matrix;
use crate::optim::{glorot_init, Parameter};

/// Nonlinearity between the two GCN layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

/// Output of an encoder on a tape: the embedding and the weight leaves, in
/// the encoder's declaration order.
pub struct Encoded<'t> {
    pub output: Var<'t>,
    pub weights: Vec<Var<'t>>,
}

/// `Â · act(Â · X · W1) · W2`
#[derive(Clone, Debug)]
pub struct GcnEncoder {
    pub w1: Parameter,
    pub w2: Parameter,
    pub activation: Activation,
}

impl GcnEncoder {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        Self {
            w1: glorot_init(in_dim, hidden, rng),
            w2: glorot_init(hidden, out_dim, rng),
            activation: Activation::Relu,
        }
    }

    pub fn from_weights(w1: Matrix, w2: Matrix, activation: Activation) -> Result<Self> {
        if w1.cols() != w2.rows() {
            return Err(Error::Shape {
                op: "GcnEncoder::from_weights",
                lhs: w1.shape(),
                rhs: w2.shape(),
            });
        }
        Ok(Self {
            w1: Parameter::new(w1),
            w2: Parameter::new(w2),
            activation,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.w1.shape().0
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.shape().1
    }

    pub fn out_dim(&self) -> usize {
        self.w2.shape().1
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        x: Var<'t>,
        adj: &Arc<NormalizedAdjacency>,
    ) -> Result<Encoded<'t>> {
        let w1 = tape.param(self.w1.value().clone());
        let w2 = tape.param(self.w2.value().clone());
        let hidden = x.matmul(w1)?.spmm(adj)?;
        let hidden = match self.activation {
            Activation::Relu => hidden.relu(),
            Activation::Linear => hidden,
        };
        let output = hidden.matmul(w2)?.spmm(adj)?;
        Ok(Encoded {
            output,
            weights: vec![w1, w2],
        })
    }

    /// Embeds `x` without keeping a tape around.
    pub fn embed(&self, x: &Matrix, adj: &Arc<NormalizedAdjacency>) -> Result<Matrix> {
        let tape = Tape::new();
        let out = self.forward(&tape, tape.constant(x.clone()), adj)?.output;
        Ok((*out.value()).clone())
    }

    pub fn params(&self) -> [&Parameter; 2] {
        [&self.w1, &self.w2]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 2] {
        [&mut self.w1, &mut self.w2]
    }
}

/// `Â · (s · row_normalize(X · W))`
///
/// Every row of `X·W` is rescaled to norm `s` before propagation, so a node
/// with no neighbors keeps an embedding of norm exactly `s`.
#[derive(Clone, Debug)]
pub struct GncnEncoder {
    pub w: Parameter,
    pub scale: f64,
}

impl GncnEncoder {
    pub fn new<R: Rng + ?Sized>(in_dim: usize, out_dim: usize, scale: f64, rng: &mut R) -> Self {
        assert!(scale > 0.0, "scaling constant must be positive");
        Self {
            w: glorot_init(in_dim, out_dim, rng),
            scale,
        }
    }

    pub fn from_weights(w: Matrix, scale: f64) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(Error::Input(format!(
                "scaling constant must be positive, got {scale}"
            )));
        }
        Ok(Self {
            w: Parameter::new(w),
            scale,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.w.shape().0
    }

    pub fn out_dim(&self) -> usize {
        self.w.shape().1
    }

    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        x: Var<'t>,
        adj: &Arc<NormalizedAdjacency>,
    ) -> Result<Encoded<'t>> {
        let w = tape.param(self.w.value().clone());
        let output = x.matmul(w)?.row_l2_normalize(self.scale)?.spmm(adj)?;
        Ok(Encoded {
            output,
            weights: vec![w],
        })
    }

    pub fn embed(&self, x: &Matrix, adj: &Arc<NormalizedAdjacency>) -> Result<Matrix> {
        let tape = Tape::new();
        let out = self.forward(&tape, tape.constant(x.clone()), adj)?.output;
        Ok((*out.value()).clone())
    }

    pub fn params(&self) -> [&Parameter; 1] {
        [&self.w]
    }

    pub fn params_mut(&mut self) -> [&mut Parameter; 1] {
        [&mut self.w]
    }
}
