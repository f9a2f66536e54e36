//! Reverse-mode automatic differentiation on a dynamically recorded tape.
//!
//! Every operation eagerly computes its output tensor and, when any input
//! participates in differentiation, records a backward closure. Closures
//! capture clones of whatever forward values they need, so replay is a
//! single reverse sweep with no re-execution and no aliasing puzzles.
//! Node ids are assigned in creation order, which is a topological order
//! of the computation DAG by construction.
//!
//! The tape is rebuilt per forward pass and consumed by `backward`.

mod adam;
mod check;
mod ops;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use check::finite_diff_check;

use std::cell::{Cell, RefCell};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::params::{GradMap, ParamStore};
use crate::tensor::Tensor;

static TAPE_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Handle to a node on a specific tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Value {
    tape: u64,
    id: usize,
}

impl Value {
    pub fn id(&self) -> usize {
        self.id
    }
}

/// out_grad -> one gradient contribution per recorded parent, same order.
type BackwardFn = Box<dyn Fn(&Tensor) -> Vec<Tensor>>;

struct Node {
    data: Tensor,
    grad: Option<Tensor>,
    requires_grad: bool,
    parents: Vec<usize>,
    backward: Option<BackwardFn>,
}

/// A single-threaded recording of one forward computation.
pub struct Tape {
    uid: u64,
    nodes: RefCell<Vec<Node>>,
    params: RefCell<BTreeMap<String, usize>>,
    consumed: Cell<bool>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            uid: TAPE_COUNTER.fetch_add(1, Ordering::Relaxed),
            nodes: RefCell::new(Vec::new()),
            params: RefCell::new(BTreeMap::new()),
            consumed: Cell::new(false),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, node: Node) -> Value {
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(node);
        Value { tape: self.uid, id }
    }

    fn push_leaf(&self, data: Tensor, requires_grad: bool) -> Value {
        self.push(Node {
            data,
            grad: None,
            requires_grad,
            parents: Vec::new(),
            backward: None,
        })
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, data: Tensor) -> Value {
        self.push_leaf(data, false)
    }

    /// Differentiable leaf (positions, probe inputs).
    pub fn var(&self, data: Tensor) -> Value {
        self.push_leaf(data, true)
    }

    /// Differentiable leaf registered under a stable name; its gradient
    /// appears in the map returned by `backward`.
    pub fn param(&self, name: &str, data: Tensor) -> Value {
        let v = self.push_leaf(data, true);
        self.params.borrow_mut().insert(name.to_owned(), v.id);
        v
    }

    /// Load every tensor of a store as a named parameter leaf.
    pub fn load_params(&self, store: &ParamStore) -> BTreeMap<String, Value> {
        store
            .iter()
            .map(|(name, tensor)| (name.clone(), self.param(name, tensor.clone())))
            .collect()
    }

    /// Load a store as constants (evaluation path: records no backward rules).
    pub fn load_params_frozen(&self, store: &ParamStore) -> BTreeMap<String, Value> {
        store
            .iter()
            .map(|(name, tensor)| (name.clone(), self.constant(tensor.clone())))
            .collect()
    }

    pub fn shape_of(&self, v: Value) -> Vec<usize> {
        self.check(v);
        self.nodes.borrow()[v.id].data.shape().to_vec()
    }

    /// Clone of a node's forward value.
    pub fn value(&self, v: Value) -> Tensor {
        self.check(v);
        self.nodes.borrow()[v.id].data.clone()
    }

    /// Gradient accumulated on a node; zeros when it never received one.
    pub fn grad(&self, v: Value) -> Tensor {
        self.check(v);
        let nodes = self.nodes.borrow();
        let node = &nodes[v.id];
        node.grad
            .clone()
            .unwrap_or_else(|| Tensor::zeros(node.data.shape().to_vec()))
    }

    fn check(&self, v: Value) {
        debug_assert_eq!(v.tape, self.uid, "value used with a foreign tape");
    }

    fn data<R>(&self, v: Value, f: impl FnOnce(&Tensor) -> R) -> R {
        self.check(v);
        f(&self.nodes.borrow()[v.id].data)
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&id| nodes[id].requires_grad)
    }

    /// Record an op node. `backward` is dropped when no parent needs it.
    fn record(
        &self,
        data: Tensor,
        parents: Vec<usize>,
        backward: impl Fn(&Tensor) -> Vec<Tensor> + 'static,
    ) -> Value {
        if self.requires(&parents) {
            self.push(Node {
                data,
                grad: None,
                requires_grad: true,
                parents,
                backward: Some(Box::new(backward)),
            })
        } else {
            self.push(Node {
                data,
                grad: None,
                requires_grad: false,
                parents: Vec::new(),
                backward: None,
            })
        }
    }

    /// Reverse sweep from a scalar loss. Populates every participating
    /// node's gradient and returns the gradient of each named parameter
    /// (zeros for parameters the loss never touched).
    ///
    /// Consumes the tape's backward rules: calling twice is an error.
    pub fn backward(&self, loss: Value) -> Result<GradMap> {
        self.check(loss);
        if self.consumed.get() {
            return Err(Error::BackwardTwice);
        }
        self.consumed.set(true);

        {
            let mut nodes = self.nodes.borrow_mut();
            let lnode = &mut nodes[loss.id];
            if !lnode.data.is_scalar() {
                return Err(Error::LossNotScalar(lnode.data.shape().to_vec()));
            }
            lnode.grad = Some(Tensor::scalar(1.0));
        }

        let n = self.nodes.borrow().len();
        for id in (0..=loss.id.min(n - 1)).rev() {
            let (grad, backward, parents) = {
                let mut nodes = self.nodes.borrow_mut();
                let node = &mut nodes[id];
                if node.grad.is_none() || node.backward.is_none() {
                    continue;
                }
                (
                    node.grad.clone().unwrap(),
                    node.backward.take().unwrap(),
                    node.parents.clone(),
                )
            };
            let contributions = backward(&grad);
            debug_assert_eq!(contributions.len(), parents.len());
            let mut nodes = self.nodes.borrow_mut();
            for (pid, contrib) in parents.into_iter().zip(contributions) {
                let parent = &mut nodes[pid];
                if !parent.requires_grad {
                    continue;
                }
                match &mut parent.grad {
                    Some(g) => {
                        debug_assert_eq!(g.shape(), contrib.shape());
                        for (gv, cv) in g.data_mut().iter_mut().zip(contrib.data()) {
                            *gv += cv;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            }
        }

        let nodes = self.nodes.borrow();
        Ok(self
            .params
            .borrow()
            .iter()
            .map(|(name, &id)| {
                let node = &nodes[id];
                let g = node
                    .grad
                    .clone()
                    .unwrap_or_else(|| Tensor::zeros(node.data.shape().to_vec()));
                (name.clone(), g)
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backward_of_square() {
        // loss = x*x at x=3 -> grad 6
        let tape = Tape::new();
        let x = tape.param("x", Tensor::scalar(3.0));
        let loss = tape.mul(x, x).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads["x"].item(), 6.0);
    }

    #[test]
    fn constant_loss_gives_zero_param_grads() {
        let tape = Tape::new();
        let _w = tape.param("w", Tensor::from_vec(vec![1.0, 2.0]));
        let a = tape.constant(Tensor::from_vec(vec![5.0, 7.0]));
        let loss = tape.sum_all(a).unwrap();
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads["w"].data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let tape = Tape::new();
        let x = tape.var(Tensor::scalar(2.0));
        let loss = tape.mul(x, x).unwrap();
        tape.backward(loss).unwrap();
        assert!(matches!(tape.backward(loss), Err(Error::BackwardTwice)));
    }

    #[test]
    fn non_scalar_loss_is_an_error() {
        let tape = Tape::new();
        let x = tape.var(Tensor::from_vec(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::LossNotScalar(_))));
    }

    #[test]
    fn backward_is_deterministic() {
        let run = || {
            let tape = Tape::new();
            let w = tape.param(
                "w",
                Tensor::new(vec![2, 2], vec![0.3, -0.7, 1.1, 0.2]).unwrap(),
            );
            let x = tape.constant(Tensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
            let y = tape.matmul(x, w).unwrap();
            let s = tape.silu(y).unwrap();
            let loss = tape.sum_all(s).unwrap();
            tape.backward(loss).unwrap()
        };
        let a = run();
        let b = run();
        for (ga, gb) in a.values().zip(b.values()) {
            assert_eq!(ga.data(), gb.data());
        }
    }

    #[test]
    fn grad_of_untouched_node_is_zeros() {
        let tape = Tape::new();
        let x = tape.var(Tensor::from_vec(vec![1.0, 2.0]));
        let y = tape.var(Tensor::scalar(4.0));
        let loss = tape.mul(y, y).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(x).data(), &[0.0, 0.0]);
        assert_eq!(tape.grad(y).item(), 8.0);
    }
}
