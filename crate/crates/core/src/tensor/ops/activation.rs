use crate::error::{Error, Result};
use crate::tensor::{Backward, Element, Tensor};

/// Parameter-free elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
}

pub fn activation<T: Element>(input: &Tensor<T>, kind: Activation) -> Tensor<T> {
    let x = input.data();
    let out: Vec<T> = match kind {
        Activation::LeakyRelu(a) => {
            let a = T::from_f64(a);
            x.iter().map(|&v| if v > T::zero() { v } else { a * v }).collect()
        }
        Activation::Sigmoid => x.iter().map(|&v| sigmoid(v)).collect(),
        Activation::Tanh => x.iter().map(|&v| v.tanh()).collect(),
    };
    Tensor::from_op(
        input.shape().clone(),
        out,
        vec![input.clone()],
        ActivationBackward(kind),
    )
}

fn sigmoid<T: Element>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

struct ActivationBackward(Activation);

impl<T: Element> Backward<T> for ActivationBackward {
    fn backward(&self, parents: &[Tensor<T>], out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        let x = parents[0].data();
        let g: Vec<T> = match self.0 {
            Activation::LeakyRelu(a) => {
                let a = T::from_f64(a);
                x.iter()
                    .zip(grad)
                    .map(|(&v, &g)| if v > T::zero() { g } else { a * g })
                    .collect()
            }
            Activation::Sigmoid => out.iter().zip(grad).map(|(&y, &g)| g * y * (T::one() - y)).collect(),
            Activation::Tanh => out.iter().zip(grad).map(|(&y, &g)| g * (T::one() - y * y)).collect(),
        };
        vec![Some(g)]
    }
}

/// Parametric ReLU with a single learnable slope shared by all elements.
pub fn prelu<T: Element>(input: &Tensor<T>, slope: &Tensor<T>) -> Result<Tensor<T>> {
    if slope.numel() != 1 {
        return Err(Error::dim("prelu", "slope", 1, slope.numel()));
    }
    let a = slope.data()[0];
    let out = input
        .data()
        .iter()
        .map(|&v| if v > T::zero() { v } else { a * v })
        .collect();
    Ok(Tensor::from_op(
        input.shape().clone(),
        out,
        vec![input.clone(), slope.clone()],
        PreluBackward,
    ))
}

struct PreluBackward;

impl<T: Element> Backward<T> for PreluBackward {
    fn backward(&self, parents: &[Tensor<T>], _out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        let x = parents[0].data();
        let a = parents[1].data()[0];
        let dx = parents[0].requires_grad().then(|| {
            x.iter()
                .zip(grad)
                .map(|(&v, &g)| if v > T::zero() { g } else { a * g })
                .collect()
        });
        let da = parents[1].requires_grad().then(|| {
            let s = x
                .iter()
                .zip(grad)
                .filter(|(&v, _)| v <= T::zero())
                .map(|(&v, &g)| v * g)
                .sum::<T>();
            vec![s]
        });
        vec![dx, da]
    }
}
