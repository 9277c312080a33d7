//! Elementwise arithmetic and reductions used to assemble losses.

use crate::error::{Error, Result};
use crate::tensor::{Backward, Element, Shape, Tensor};

fn same_shape<T: Element>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::dim(
            op,
            "shape",
            format!("{:?}", a.dims()),
            format!("{:?}", b.dims()),
        ));
    }
    Ok(())
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

struct BinaryBackward(Binary);

impl<T: Element> Backward<T> for BinaryBackward {
    fn backward(&self, parents: &[Tensor<T>], _out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        let (a, b) = (&parents[0], &parents[1]);
        match self.0 {
            Binary::Add => vec![
                a.requires_grad().then(|| grad.to_vec()),
                b.requires_grad().then(|| grad.to_vec()),
            ],
            Binary::Sub => vec![
                a.requires_grad().then(|| grad.to_vec()),
                b.requires_grad().then(|| grad.iter().map(|&g| -g).collect()),
            ],
            Binary::Mul => vec![
                a.requires_grad()
                    .then(|| grad.iter().zip(b.data()).map(|(&g, &v)| g * v).collect()),
                b.requires_grad()
                    .then(|| grad.iter().zip(a.data()).map(|(&g, &v)| g * v).collect()),
            ],
        }
    }
}

fn binary<T: Element>(op: &'static str, kind: Binary, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(op, a, b)?;
    let f = |x: T, y: T| match kind {
        Binary::Add => x + y,
        Binary::Sub => x - y,
        Binary::Mul => x * y,
    };
    let out = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor::from_op(
        a.shape().clone(),
        out,
        vec![a.clone(), b.clone()],
        BinaryBackward(kind),
    ))
}

pub fn add<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary("add", Binary::Add, a, b)
}

pub fn sub<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary("sub", Binary::Sub, a, b)
}

pub fn mul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    binary("mul", Binary::Mul, a, b)
}

#[derive(Clone, Copy)]
enum Unary<T> {
    /// `a * x + b`
    Affine(T, T),
    Square,
    Ln,
    Clamp(T, T),
}

struct UnaryBackward<T>(Unary<T>);

impl<T: Element> Backward<T> for UnaryBackward<T> {
    fn backward(&self, parents: &[Tensor<T>], _out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        let x = parents[0].data();
        let g = match self.0 {
            Unary::Affine(a, _) => grad.iter().map(|&g| g * a).collect(),
            Unary::Square => grad.iter().zip(x).map(|(&g, &v)| g * (v + v)).collect(),
            Unary::Ln => grad.iter().zip(x).map(|(&g, &v)| g / v).collect(),
            Unary::Clamp(lo, hi) => grad
                .iter()
                .zip(x)
                .map(|(&g, &v)| if v < lo || v > hi { T::zero() } else { g })
                .collect(),
        };
        vec![Some(g)]
    }
}

fn unary<T: Element>(x: &Tensor<T>, kind: Unary<T>) -> Tensor<T> {
    let out = x
        .data()
        .iter()
        .map(|&v| match kind {
            Unary::Affine(a, b) => a * v + b,
            Unary::Square => v * v,
            Unary::Ln => v.ln(),
            Unary::Clamp(lo, hi) => v.max(lo).min(hi),
        })
        .collect();
    Tensor::from_op(x.shape().clone(), out, vec![x.clone()], UnaryBackward(kind))
}

/// `scale * x + shift`
pub fn affine<T: Element>(x: &Tensor<T>, scale: f64, shift: f64) -> Tensor<T> {
    unary(x, Unary::Affine(T::from_f64(scale), T::from_f64(shift)))
}

pub fn scale<T: Element>(x: &Tensor<T>, s: f64) -> Tensor<T> {
    affine(x, s, 0.0)
}

pub fn square<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    unary(x, Unary::Square)
}

pub fn ln<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    unary(x, Unary::Ln)
}

/// Clamp to `[lo, hi]`; the gradient is zero outside the interval.
pub fn clamp<T: Element>(x: &Tensor<T>, lo: f64, hi: f64) -> Tensor<T> {
    unary(x, Unary::Clamp(T::from_f64(lo), T::from_f64(hi)))
}

struct ReduceBackward<T> {
    factor: T,
    len: usize,
}

impl<T: Element> Backward<T> for ReduceBackward<T> {
    fn backward(&self, _p: &[Tensor<T>], _out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        vec![Some(vec![grad[0] * self.factor; self.len])]
    }
}

/// Sum of all elements as a scalar.
pub fn sum<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let s = x.data().iter().copied().sum::<T>();
    Tensor::from_op(
        Shape::scalar(),
        vec![s],
        vec![x.clone()],
        ReduceBackward {
            factor: T::one(),
            len: x.numel(),
        },
    )
}

/// Mean of all elements as a scalar.
pub fn mean<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let inv = T::from_f64(1.0 / x.numel() as f64);
    let s = x.data().iter().copied().sum::<T>() * inv;
    Tensor::from_op(
        Shape::scalar(),
        vec![s],
        vec![x.clone()],
        ReduceBackward {
            factor: inv,
            len: x.numel(),
        },
    )
}

struct ReshapeBackward;

impl<T: Element> Backward<T> for ReshapeBackward {
    fn backward(&self, _p: &[Tensor<T>], _out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        vec![Some(grad.to_vec())]
    }
}

pub fn reshape<T: Element>(x: &Tensor<T>, dims: impl Into<Vec<usize>>) -> Result<Tensor<T>> {
    let shape = Shape::new(dims)?;
    if shape.numel() != x.numel() {
        return Err(Error::dim("reshape", "numel", x.numel(), shape.numel()));
    }
    Ok(Tensor::from_op(
        shape,
        x.data().to_vec(),
        vec![x.clone()],
        ReshapeBackward,
    ))
}
