//! Dense f64 tensors with reverse-mode differentiation.
//!
//! Graphs are built eagerly during the forward pass; each op records its
//! parents and a backward closure. `backward` on a scalar root walks the
//! graph once in reverse topological order and accumulates gradients into
//! every reachable tensor with `requires_grad` set.

mod ops;
pub mod nn;
pub mod optim;
pub mod checkpoint;

use std::cell::RefCell;
use std::collections::HashSet;
use std::rc::Rc;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

type BackwardFn = Box<dyn Fn(&[f64], &[Tensor])>;

struct Node {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    parents: Vec<Tensor>,
    backward: Option<BackwardFn>,
}

/// Shared handle to a graph node. Cloning is cheap and aliases the same data.
#[derive(Clone)]
pub struct Tensor {
    inner: Rc<RefCell<Node>>,
}

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let n = self.inner.borrow();
        f.debug_struct("Tensor")
            .field("shape", &n.shape)
            .field("requires_grad", &n.requires_grad)
            .finish()
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::Shape(format!(
                "data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Self::leaf(shape, data, false))
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel: usize = shape.iter().product();
        Self::leaf(shape, vec![0.0; numel], false)
    }

    pub fn scalar(v: f64) -> Self {
        Self::leaf(vec![1], vec![v], false)
    }

    fn leaf(shape: Vec<usize>, data: Vec<f64>, requires_grad: bool) -> Self {
        Tensor {
            inner: Rc::new(RefCell::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                grad: None,
                requires_grad,
                parents: Vec::new(),
                backward: None,
            })),
        }
    }

    pub(crate) fn from_op(
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Self {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        if !requires_grad {
            return Self::leaf(shape, data, false);
        }
        Tensor {
            inner: Rc::new(RefCell::new(Node {
                id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
                shape,
                data,
                grad: None,
                requires_grad: true,
                parents,
                backward: Some(backward),
            })),
        }
    }

    pub fn shape(&self) -> Vec<usize> {
        self.inner.borrow().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.inner.borrow().shape.iter().product()
    }

    pub fn data(&self) -> Vec<f64> {
        self.inner.borrow().data.clone()
    }

    /// Read forward data without cloning.
    pub fn with_data<R>(&self, f: impl FnOnce(&[f64]) -> R) -> R {
        f(&self.inner.borrow().data)
    }

    pub fn item(&self) -> f64 {
        let n = self.inner.borrow();
        assert_eq!(n.data.len(), 1, "item() on non-scalar tensor");
        n.data[0]
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.inner.borrow().grad.clone()
    }

    pub fn zero_grad(&self) {
        self.inner.borrow_mut().grad = None;
    }

    pub fn requires_grad(&self) -> bool {
        self.inner.borrow().requires_grad
    }

    pub fn set_requires_grad(&self, value: bool) {
        self.inner.borrow_mut().requires_grad = value;
    }

    /// Overwrite forward data in place (optimizer updates, checkpoint loads).
    pub fn set_data(&self, data: Vec<f64>) {
        let mut n = self.inner.borrow_mut();
        assert_eq!(n.data.len(), data.len(), "set_data length mismatch");
        n.data = data;
    }

    pub fn set_grad(&self, grad: Vec<f64>) {
        let mut n = self.inner.borrow_mut();
        assert_eq!(n.data.len(), grad.len(), "set_grad length mismatch");
        n.grad = Some(grad);
    }

    /// Detached copy: same data, no graph history, no grad requirement.
    pub fn detach(&self) -> Tensor {
        let n = self.inner.borrow();
        Self::leaf(n.shape.clone(), n.data.clone(), false)
    }

    pub(crate) fn accumulate_grad(&self, g: &[f64]) {
        let mut n = self.inner.borrow_mut();
        if !n.requires_grad {
            return;
        }
        match &mut n.grad {
            Some(acc) => {
                for (a, b) in acc.iter_mut().zip(g) {
                    *a += b;
                }
            }
            None => n.grad = Some(g.to_vec()),
        }
    }

    /// Reverse pass from a scalar root. Each reachable node is visited once.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar root, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Ok(());
        }
        let order = self.topo_order();
        self.inner.borrow_mut().grad = Some(vec![1.0]);
        for t in order.iter().rev() {
            let (grad, parents_empty) = {
                let n = t.inner.borrow();
                (n.grad.clone(), n.parents.is_empty())
            };
            if parents_empty {
                continue;
            }
            let Some(grad) = grad else { continue };
            let n = t.inner.borrow();
            if let Some(bw) = &n.backward {
                bw(&grad, &n.parents);
            }
        }
        Ok(())
    }

    fn topo_order(&self) -> Vec<Tensor> {
        // Iterative DFS postorder: parents appear before their consumers.
        let mut order = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            let id = t.inner.borrow().id;
            if expanded {
                order.push(t);
                continue;
            }
            if !visited.insert(id) {
                continue;
            }
            stack.push((t.clone(), true));
            let n = t.inner.borrow();
            for p in &n.parents {
                if p.requires_grad() {
                    stack.push((p.clone(), false));
                }
            }
        }
        order
    }
}

#[cfg(test)]
mod tests;
