//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every differentiable operation produces a [`Var`] node stamped with a
//! monotonically increasing id. The ids form the tape: a node's inputs always
//! carry smaller ids than the node itself, so walking reachable nodes in
//! descending id order replays the recorded operations in reverse, visiting
//! each exactly once.

mod conv;
pub(crate) mod gemm;
mod ops;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

pub use conv::{conv2d, conv_transpose2d, linear};
pub use ops::{
    add, broadcast_scalar, concat_channels, cross_entropy_channels, l2_distance, mean, mse, mul, relu, reshape,
    scale, select_row, sigmoid, slice_channels, softmax_channels, sub, sum, tanh,
};

use crate::error::{Result, TcnnError};
use crate::tensor::Tensor;

static NEXT_NODE_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    NEXT_NODE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Maps the output gradient to one optional gradient per input.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[Var], &Tensor) -> Vec<Option<Vec<f64>>>>;

struct Node {
    id: u64,
    value: Tensor,
    requires_grad: bool,
    param_key: Option<u64>,
    parents: Vec<Var>,
    backward: Option<BackwardFn>,
}

/// A value in the computation graph.
#[derive(Clone)]
pub struct Var(Rc<Node>);

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.0.id)
            .field("shape", &self.0.value.shape())
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Var {
    /// A leaf that takes no part in differentiation.
    pub fn constant(value: Tensor) -> Self {
        Self::leaf_node(value, false, None)
    }

    /// A leaf whose gradient is reported by [`backward`].
    pub fn input(value: Tensor) -> Self {
        Self::leaf_node(value, true, None)
    }

    pub(crate) fn parameter(value: Tensor, key: u64, trainable: bool) -> Self {
        Self::leaf_node(value, trainable, Some(key))
    }

    fn leaf_node(value: Tensor, requires_grad: bool, param_key: Option<u64>) -> Self {
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            param_key,
            parents: Vec::new(),
            backward: None,
        }))
    }

    /// Records an operation. The closure is dropped when no input needs a
    /// gradient, so inference graphs hold no saved state.
    pub(crate) fn from_op(value: Tensor, parents: Vec<Var>, backward: BackwardFn) -> Self {
        let requires_grad = parents.iter().any(Var::requires_grad);
        let (parents, backward) = if requires_grad {
            (parents, Some(backward))
        } else {
            (Vec::new(), None)
        };
        Var(Rc::new(Node {
            id: next_id(),
            value,
            requires_grad,
            param_key: None,
            parents,
            backward,
        }))
    }

    pub fn value(&self) -> &Tensor {
        &self.0.value
    }

    pub fn shape(&self) -> &[usize] {
        self.0.value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    /// Scalar value; panics on non-scalar nodes.
    pub fn item(&self) -> f64 {
        assert!(self.0.value.is_scalar(), "item() on a non-scalar var");
        self.0.value.item()
    }
}

/// Gradients produced by one [`backward`] pass.
#[derive(Debug, Default)]
pub struct Gradients {
    leaves: HashMap<u64, Vec<f64>>,
    params: HashMap<u64, Vec<f64>>,
}

impl Gradients {
    /// Gradient for a leaf created with [`Var::input`].
    pub fn wrt(&self, var: &Var) -> Option<&[f64]> {
        self.leaves.get(&var.id()).map(Vec::as_slice)
    }

    /// Summed gradient over every leaf that was created for parameter `key`.
    pub fn param(&self, key: u64) -> Option<&[f64]> {
        self.params.get(&key).map(Vec::as_slice)
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }
}

fn accumulate(slot: &mut Option<Vec<f64>>, grad: Vec<f64>) {
    match slot {
        Some(acc) => acc.iter_mut().zip(&grad).for_each(|(a, g)| *a += g),
        None => *slot = Some(grad),
    }
}

/// Runs reverse-mode differentiation from a scalar `loss`.
pub fn backward(loss: &Var) -> Result<Gradients> {
    if !loss.value().is_scalar() {
        return Err(TcnnError::invalid(format!(
            "backward needs a scalar loss, got shape {:?}",
            loss.shape()
        )));
    }
    if !loss.requires_grad() {
        return Err(TcnnError::invalid(
            "loss does not depend on any differentiable value",
        ));
    }

    let mut seen = HashSet::new();
    let mut order = Vec::new();
    let mut stack = vec![loss.clone()];
    seen.insert(loss.id());
    while let Some(var) = stack.pop() {
        for p in &var.0.parents {
            if p.requires_grad() && seen.insert(p.id()) {
                stack.push(p.clone());
            }
        }
        order.push(var);
    }
    order.sort_unstable_by_key(|v| std::cmp::Reverse(v.id()));

    let mut pending: HashMap<u64, Option<Vec<f64>>> = HashMap::with_capacity(order.len());
    pending.insert(loss.id(), Some(vec![1.0]));
    let mut out = Gradients::default();

    for var in &order {
        let Some(grad) = pending.remove(&var.id()).flatten() else {
            continue;
        };
        let node = &var.0;
        match &node.backward {
            Some(op) => {
                let parent_grads = op(&grad, &node.parents, &node.value);
                debug_assert_eq!(parent_grads.len(), node.parents.len());
                for (p, g) in node.parents.iter().zip(parent_grads) {
                    if let Some(g) = g {
                        if p.requires_grad() {
                            debug_assert_eq!(g.len(), p.value().numel());
                            accumulate(pending.entry(p.id()).or_insert(None), g);
                        }
                    }
                }
            }
            None => match node.param_key {
                Some(key) => {
                    let mut slot = out.params.remove(&key);
                    accumulate(&mut slot, grad);
                    out.params.insert(key, slot.expect("accumulated"));
                }
                None => {
                    out.leaves.insert(node.id, grad);
                }
            },
        }
    }
    Ok(out)
}
