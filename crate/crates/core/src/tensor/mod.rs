//! Minimal reverse-mode differentiable tensor engine.
//!
//! A [`Tensor`] is an immutable, reference-counted n-dimensional array. Every
//! operation computes its result eagerly; when at least one input requires a
//! gradient the result also records how to propagate gradients back to its
//! inputs. Calling [`Tensor::backward`] on a scalar walks that graph in
//! reverse topological order and returns a [`Gradients`] store keyed by leaf.
//!
//! Tensors hold no interior mutability, so forward evaluation over shared
//! weights is safe from any number of threads.

mod autograd;
mod element;
pub mod gradcheck;
pub mod ops;

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub use autograd::Gradients;
pub(crate) use autograd::{Backward, GradFn};
pub use element::Element;
pub(crate) use element::{gemm, Mat};

use crate::error::{Error, Result};

/// Stable identity of a tensor node, used to key gradients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TensorId(u64);

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

impl TensorId {
    fn fresh() -> Self {
        TensorId(NEXT_ID.fetch_add(1, Ordering::Relaxed))
    }
}

/// Ordered list of extents. The empty shape is a scalar.
#[derive(Clone, PartialEq, Eq, Hash, Default, serde::Serialize, serde::Deserialize)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if let Some(axis) = dims.iter().position(|&d| d == 0) {
            return Err(Error::invalid(
                "shape",
                format!("extent of axis {axis} is zero in {dims:?}"),
            ));
        }
        Ok(Shape(dims))
    }

    pub fn scalar() -> Self {
        Shape(Vec::new())
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl TryFrom<&[usize]> for Shape {
    type Error = Error;
    fn try_from(d: &[usize]) -> Result<Self> {
        Shape::new(d.to_vec())
    }
}

struct Node<T: Element> {
    id: TensorId,
    shape: Shape,
    data: Vec<T>,
    requires_grad: bool,
    grad_fn: Option<GradFn<T>>,
}

/// N-dimensional row-major array with optional gradient tracking.
pub struct Tensor<T: Element = f32> {
    node: Arc<Node<T>>,
}

impl<T: Element> Clone for Tensor<T> {
    fn clone(&self) -> Self {
        Tensor {
            node: Arc::clone(&self.node),
        }
    }
}

impl<T: Element> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<T> = self.data().iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.node.shape)
            .field("requires_grad", &self.node.requires_grad)
            .field("data", &preview)
            .finish()
    }
}

impl<T: Element> Tensor<T> {
    fn make(shape: Shape, data: Vec<T>, requires_grad: bool, grad_fn: Option<GradFn<T>>) -> Self {
        debug_assert_eq!(shape.numel(), data.len());
        Tensor {
            node: Arc::new(Node {
                id: TensorId::fresh(),
                shape,
                data,
                requires_grad,
                grad_fn,
            }),
        }
    }

    /// Constant (non-differentiable) tensor.
    pub fn from_vec(dims: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::dim("from_vec", "numel", shape.numel(), data.len()));
        }
        Ok(Self::make(shape, data, false, None))
    }

    /// Trainable leaf: receives a gradient from [`Tensor::backward`].
    pub fn parameter(dims: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let t = Self::from_vec(dims, data)?;
        Ok(Self::make(t.node.shape.clone(), t.into_vec(), true, None))
    }

    pub fn full(dims: impl Into<Vec<usize>>, value: T) -> Result<Self> {
        let shape = Shape::new(dims)?;
        let n = shape.numel();
        Ok(Self::make(shape, vec![value; n], false, None))
    }

    pub fn zeros(dims: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn ones(dims: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(dims, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self::make(Shape::scalar(), vec![value], false, None)
    }

    /// Result of an operation. The backward closure is kept only when some
    /// parent participates in differentiation.
    pub(crate) fn from_op(shape: Shape, data: Vec<T>, parents: Vec<Tensor<T>>, op: impl Backward<T> + 'static) -> Self {
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        let grad_fn = requires_grad.then(|| GradFn {
            parents,
            op: Box::new(op),
        });
        Self::make(shape, data, requires_grad, grad_fn)
    }

    pub fn id(&self) -> TensorId {
        self.node.id
    }

    pub fn shape(&self) -> &Shape {
        &self.node.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.node.shape.dims()
    }

    pub fn numel(&self) -> usize {
        self.node.data.len()
    }

    pub fn data(&self) -> &[T] {
        &self.node.data
    }

    pub fn requires_grad(&self) -> bool {
        self.node.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.node.grad_fn.is_none()
    }

    /// Copies the values into a fresh constant, cutting the graph.
    pub fn detach(&self) -> Self {
        Self::make(self.node.shape.clone(), self.node.data.clone(), false, None)
    }

    /// Values, cloned unless this handle is the only owner.
    pub fn into_vec(self) -> Vec<T> {
        match Arc::try_unwrap(self.node) {
            Ok(node) => node.data,
            Err(shared) => shared.data.clone(),
        }
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.numel() != 1 {
            return Err(Error::dim("item", "numel", 1, self.numel()));
        }
        Ok(self.node.data[0])
    }

    pub fn is_finite(&self) -> bool {
        self.node.data.iter().all(|v| v.is_finite())
    }

    /// Converts element type, producing a constant.
    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor::make(
            self.node.shape.clone(),
            self.node.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
            false,
            None,
        )
    }

    /// Extents of a rank-4 tensor as `(n, c, h, w)`.
    pub(crate) fn nchw(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match *self.dims() {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::dim(op, "rank", "4 (N,C,H,W)", self.dims().len())),
        }
    }
}
