//! Trainable parameters, the Adam optimizer and Glorot initialization.

use rand::Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// A weight matrix together with its pending gradient and Adam moments.
#[derive(Clone, Debug)]
pub struct Parameter {
    value: Matrix,
    grad: Option<Matrix>,
    adam_m: Matrix,
    adam_v: Matrix,
    step_count: u64,
}

impl Parameter {
    pub fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Self {
            value,
            grad: None,
            adam_m: Matrix::zeros(r, c),
            adam_v: Matrix::zeros(r, c),
            step_count: 0,
        }
    }

    pub fn value(&self) -> &Matrix {
        &self.value
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value.shape()
    }

    pub fn grad(&self) -> Option<&Matrix> {
        self.grad.as_ref()
    }

    pub fn set_grad(&mut self, grad: Matrix) -> Result<()> {
        self.value.check_same_shape(&grad, "set_grad")?;
        self.grad = Some(grad);
        Ok(())
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &Matrix {
        &self.adam_m
    }

    pub fn second_moment(&self) -> &Matrix {
        &self.adam_v
    }

    fn adam_update(&mut self, lr: f64) {
        let grad = self.grad.take().expect("checked by adam_step");
        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - ADAM_BETA1.powi(t);
        let bias2 = 1.0 - ADAM_BETA2.powi(t);
        let w = self.value.as_mut_slice();
        let m = self.adam_m.as_mut_slice();
        let v = self.adam_v.as_mut_slice();
        for (((w, m), v), &g) in w.iter_mut().zip(m).zip(v).zip(grad.as_slice()) {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *m / bias1;
            let v_hat = *v / bias2;
            *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
}

/// One Adam update of every parameter, consuming their gradients.
///
/// Nothing is modified unless every parameter carries a gradient.
pub fn adam_step(params: &mut [&mut Parameter], lr: f64) -> Result<()> {
    if let Some(i) = params.iter().position(|p| p.grad.is_none()) {
        return Err(Error::State(format!(
            "parameter {i} has no gradient; run backward before stepping"
        )));
    }
    for p in params.iter_mut() {
        p.adam_update(lr);
    }
    Ok(())
}

/// Uniform samples in `±√(6/(rows+cols))`.
pub fn glorot_init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Parameter {
    assert!(rows > 0 && cols > 0, "glorot_init needs positive dimensions");
    let bound = glorot_bound(rows, cols);
    let value = Matrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound));
    Parameter::new(value)
}

pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}
