use std::collections::{HashMap, HashSet};

use super::{Element, Tensor, TensorId};
use crate::error::{Error, Result};

/// Local derivative of one operation.
///
/// Given the gradient of the loss w.r.t. the operation's output, returns the
/// gradient w.r.t. each parent, in parent order. `None` means "no
/// contribution" (the parent does not require a gradient).
pub(crate) trait Backward<T: Element>: Send + Sync {
    fn backward(&self, parents: &[Tensor<T>], output: &[T], grad: &[T]) -> Vec<Option<Vec<T>>>;
}

pub(crate) struct GradFn<T: Element> {
    pub parents: Vec<Tensor<T>>,
    pub op: Box<dyn Backward<T>>,
}

/// Gradients of a scalar loss w.r.t. every reachable leaf that requires one.
#[derive(Debug, Clone, Default)]
pub struct Gradients<T: Element> {
    grads: HashMap<TensorId, Vec<T>>,
}

impl<T: Element> Gradients<T> {
    pub fn get(&self, tensor: &Tensor<T>) -> Option<&[T]> {
        self.grads.get(&tensor.id()).map(Vec::as_slice)
    }

    /// Gradient as a constant tensor of the leaf's shape.
    pub fn tensor(&self, tensor: &Tensor<T>) -> Option<Tensor<T>> {
        self.get(tensor)
            .map(|g| Tensor::make(tensor.shape().clone(), g.to_vec(), false, None))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn accumulate<T: Element>(slot: &mut [T], g: Vec<T>) {
    for (a, b) in slot.iter_mut().zip(g) {
        *a += b;
    }
}

impl<T: Element> Tensor<T> {
    /// Reverse-mode differentiation from this scalar.
    ///
    /// Gradients from multiple uses of the same tensor are summed.
    pub fn backward(&self) -> Result<Gradients<T>> {
        if self.numel() != 1 {
            return Err(Error::NonScalarLoss(self.dims().to_vec()));
        }
        let mut grads: HashMap<TensorId, Vec<T>> = HashMap::new();
        if !self.requires_grad() {
            return Ok(Gradients { grads });
        }

        // Post-order DFS; reversed it is a valid processing order.
        let mut order: Vec<Tensor<T>> = Vec::new();
        let mut seen: HashSet<TensorId> = HashSet::new();
        let mut stack: Vec<(Tensor<T>, bool)> = vec![(self.clone(), false)];
        while let Some((t, expanded)) = stack.pop() {
            if expanded {
                order.push(t);
                continue;
            }
            if !seen.insert(t.id()) {
                continue;
            }
            stack.push((t.clone(), true));
            if let Some(gf) = &t.node.grad_fn {
                for p in &gf.parents {
                    if p.requires_grad() && !seen.contains(&p.id()) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }

        grads.insert(self.id(), vec![T::one()]);
        for t in order.iter().rev() {
            let Some(gf) = &t.node.grad_fn else {
                continue;
            };
            // Interior gradients are consumed; only leaves stay in the store.
            let Some(g) = grads.remove(&t.id()) else {
                continue;
            };
            let parent_grads = gf.op.backward(&gf.parents, t.data(), &g);
            debug_assert_eq!(parent_grads.len(), gf.parents.len());
            for (p, pg) in gf.parents.iter().zip(parent_grads) {
                let Some(pg) = pg else { continue };
                if !p.requires_grad() {
                    continue;
                }
                debug_assert_eq!(pg.len(), p.numel());
                match grads.get_mut(&p.id()) {
                    Some(slot) => accumulate(slot, pg),
                    None => {
                        grads.insert(p.id(), pg);
                    }
                }
            }
        }
        Ok(Gradients { grads })
    }
}
