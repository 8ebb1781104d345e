//! Named trainable tensors and the containers that own them.

use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use crate::autograd::{Gradients, Var};
use crate::error::{Result, TcnnError};
use crate::tensor::Tensor;

static NEXT_PARAM_KEY: AtomicU64 = AtomicU64::new(1);

/// A named tensor updated by the optimizer, with its momentum buffer.
#[derive(Debug)]
pub struct Parameter {
    name: String,
    key: u64,
    value: Tensor,
    grad: Option<Vec<f64>>,
    velocity: Vec<f64>,
    frozen: bool,
}

impl Clone for Parameter {
    fn clone(&self) -> Self {
        Parameter {
            name: self.name.clone(),
            key: NEXT_PARAM_KEY.fetch_add(1, Ordering::Relaxed),
            value: self.value.clone(),
            grad: self.grad.clone(),
            velocity: self.velocity.clone(),
            frozen: self.frozen,
        }
    }
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        let velocity = vec![0.0; value.numel()];
        Parameter {
            name: name.into(),
            key: NEXT_PARAM_KEY.fetch_add(1, Ordering::Relaxed),
            value,
            grad: None,
            velocity,
            frozen: false,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn key(&self) -> u64 {
        self.key
    }

    pub fn value(&self) -> &Tensor {
        &self.value
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn set_frozen(&mut self, frozen: bool) {
        self.frozen = frozen;
    }

    /// A graph leaf holding the current value. Frozen parameters still let
    /// gradients flow through the ops that consume them, but never receive
    /// one themselves.
    pub fn var(&self) -> Var {
        Var::parameter(self.value.clone(), self.key, !self.frozen)
    }

    pub fn set_value(&mut self, value: Tensor) -> Result<()> {
        if value.shape() != self.value.shape() {
            return Err(TcnnError::Validation(format!(
                "{}: shape {:?} does not match {:?}",
                self.name,
                value.shape(),
                self.value.shape()
            )));
        }
        self.value = value;
        Ok(())
    }

    pub fn set_velocity(&mut self, velocity: Vec<f64>) -> Result<()> {
        if velocity.len() != self.velocity.len() {
            return Err(TcnnError::Validation(format!(
                "{}: velocity has {} values, expected {}",
                self.name,
                velocity.len(),
                self.velocity.len()
            )));
        }
        self.velocity = velocity;
        Ok(())
    }

    pub(crate) fn accumulate(&mut self, grad: &[f64]) {
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(grad).for_each(|(a, g)| *a += g),
            None => self.grad = Some(grad.to_vec()),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    pub(crate) fn apply_update(&mut self, lr: f64, momentum: f64) {
        let grad = self.grad.take().expect("checked by caller");
        let data = self.value.data_mut();
        for ((p, v), g) in data.iter_mut().zip(&mut self.velocity).zip(&grad) {
            *v = momentum * *v + g;
            *p -= lr * *v;
        }
    }
}

/// Anything that owns parameters.
pub trait Module {
    fn parameters(&self) -> Vec<&Parameter>;

    fn parameters_mut(&mut self) -> Vec<&mut Parameter>;

    fn freeze(&mut self) {
        self.parameters_mut()
            .into_iter()
            .for_each(|p| p.set_frozen(true));
    }

    fn unfreeze(&mut self) {
        self.parameters_mut()
            .into_iter()
            .for_each(|p| p.set_frozen(false));
    }

    fn is_frozen(&self) -> bool {
        self.parameters().iter().all(|p| p.is_frozen())
    }

    /// Adds the gradients of one backward pass into each parameter.
    fn accumulate_grads(&mut self, grads: &Gradients) {
        for p in self.parameters_mut() {
            if let Some(g) = grads.param(p.key()) {
                p.accumulate(g);
            }
        }
    }

    fn zero_grad(&mut self) {
        self.parameters_mut()
            .into_iter()
            .for_each(Parameter::zero_grad);
    }

    fn num_weights(&self) -> usize {
        self.parameters().iter().map(|p| p.value().numel()).sum()
    }

    /// SHA-256 over names, shapes and the raw bytes of every value.
    fn param_hash(&self) -> String {
        let mut h = Sha256::new();
        for p in self.parameters() {
            h.update(p.name().as_bytes());
            for d in p.value().shape() {
                h.update((*d as u64).to_le_bytes());
            }
            for v in p.value().data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}
