use crate::error::{Error, Result};
use crate::tensor::{Backward, Element, Shape, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Exponential moving averages of per-channel batch statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats<T: Element = f32> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Element> RunningStats<T> {
    pub fn new(channels: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); channels],
            var: vec![T::one(); channels],
        }
    }

    /// `running = (1 - momentum) * running + momentum * batch`, using the
    /// unbiased batch variance.
    pub fn update(&mut self, batch: &BatchStats<T>, momentum: f64) {
        let m = T::from_f64(momentum);
        let keep = T::one() - m;
        for (r, &b) in self.mean.iter_mut().zip(&batch.mean) {
            *r = keep * *r + m * b;
        }
        for (r, &b) in self.var.iter_mut().zip(&batch.unbiased_var) {
            *r = keep * *r + m * b;
        }
    }
}

/// Statistics of one training-mode batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T: Element = f32> {
    pub mean: Vec<T>,
    pub unbiased_var: Vec<T>,
}

pub enum BatchNormMode<'a, T: Element> {
    /// Normalize with batch statistics (returned for the caller to fold into
    /// its running statistics).
    Train,
    /// Normalize with the given running statistics.
    Eval(&'a RunningStats<T>),
}

/// Per-channel normalization followed by `gamma * x̂ + beta`.
pub fn batch_norm<T: Element>(
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mode: BatchNormMode<'_, T>,
) -> Result<(Tensor<T>, Option<BatchStats<T>>)> {
    const OP: &str = "batch_norm";
    let (n, c, h, w) = input.nchw(OP)?;
    for (name, p) in [("gamma", gamma), ("beta", beta)] {
        if p.dims() != [c] {
            return Err(Error::dim(OP, name, format!("[{c}]"), format!("{:?}", p.dims())));
        }
    }
    let plane = h * w;
    let count = n * plane;
    let x = input.data();
    let eps = T::from_f64(BN_EPSILON);

    let (mean, var, stats) = match mode {
        BatchNormMode::Train => {
            if count < 2 {
                return Err(Error::invalid(OP, "training mode needs N*H*W >= 2"));
            }
            let mut mean = vec![0.0f64; c];
            let mut var = vec![0.0f64; c];
            for ch in 0..c {
                let vals = (0..n).flat_map(|b| &x[(b * c + ch) * plane..(b * c + ch + 1) * plane]);
                let m = vals.clone().map(|v| v.as_f64()).sum::<f64>() / count as f64;
                let v = vals.map(|v| (v.as_f64() - m).powi(2)).sum::<f64>() / count as f64;
                mean[ch] = m;
                var[ch] = v;
            }
            let stats = BatchStats {
                mean: mean.iter().map(|&m| T::from_f64(m)).collect(),
                unbiased_var: var
                    .iter()
                    .map(|&v| T::from_f64(v * count as f64 / (count - 1) as f64))
                    .collect(),
            };
            (
                mean.into_iter().map(T::from_f64).collect::<Vec<T>>(),
                var.into_iter().map(T::from_f64).collect::<Vec<T>>(),
                Some(stats),
            )
        }
        BatchNormMode::Eval(rs) => {
            if rs.mean.len() != c || rs.var.len() != c {
                return Err(Error::dim(OP, "running_stats", c, rs.mean.len()));
            }
            (rs.mean.clone(), rs.var.clone(), None)
        }
    };

    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    let mut out = vec![T::zero(); x.len()];
    for b in 0..n {
        for ch in 0..c {
            let r = (b * c + ch) * plane..(b * c + ch + 1) * plane;
            let (g, bt, m, s) = (gamma.data()[ch], beta.data()[ch], mean[ch], inv_std[ch]);
            for i in r {
                let xh = (x[i] - m) * s;
                xhat[i] = xh;
                out[i] = g * xh + bt;
            }
        }
    }
    let train = stats.is_some();
    let t = Tensor::from_op(
        Shape::new([n, c, h, w])?,
        out,
        vec![input.clone(), gamma.clone(), beta.clone()],
        BatchNormBackward {
            xhat,
            inv_std,
            n,
            c,
            plane,
            train,
        },
    );
    Ok((t, stats))
}

struct BatchNormBackward<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    n: usize,
    c: usize,
    plane: usize,
    train: bool,
}

impl<T: Element> Backward<T> for BatchNormBackward<T> {
    fn backward(&self, parents: &[Tensor<T>], _out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        let (n, c, plane) = (self.n, self.c, self.plane);
        let count = T::from_f64((n * plane) as f64);
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for b in 0..n {
            for ch in 0..c {
                let range = (b * c + ch) * plane..(b * c + ch + 1) * plane;
                for (&g, &xh) in grad[range.clone()].iter().zip(&self.xhat[range]) {
                    dgamma[ch] += g * xh;
                    dbeta[ch] += g;
                }
            }
        }
        let dx = parents[0].requires_grad().then(|| {
            let gamma = parents[1].data();
            let mut dx = vec![T::zero(); grad.len()];
            for b in 0..n {
                for ch in 0..c {
                    let scale = gamma[ch] * self.inv_std[ch];
                    for i in (b * c + ch) * plane..(b * c + ch + 1) * plane {
                        dx[i] = if self.train {
                            // d/dx of gamma * (x - mean) / std with batch statistics.
                            scale * (grad[i] - dbeta[ch] / count - self.xhat[i] * dgamma[ch] / count)
                        } else {
                            scale * grad[i]
                        };
                    }
                }
            }
            dx
        });
        vec![
            dx,
            parents[1].requires_grad().then_some(dgamma),
            parents[2].requires_grad().then_some(dbeta),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(dims.to_vec(), data).unwrap()
    }

    #[test]
    fn constant_input_normalizes_to_zero() {
        let x = t(&[2, 1, 2, 2], vec![3.0; 8]);
        let (y, _) = batch_norm(&x, &t(&[1], vec![1.]), &t(&[1], vec![0.]), BatchNormMode::Train).unwrap();
        assert!(y.data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn zero_gamma_yields_beta() {
        let x = t(&[2, 1, 1, 2], vec![1., 5., -2., 0.5]);
        let (y, _) = batch_norm(&x, &t(&[1], vec![0.]), &t(&[1], vec![7.]), BatchNormMode::Train).unwrap();
        assert!(y.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn two_values_map_to_minus_one_and_one() {
        let x = t(&[2, 1, 1, 1], vec![1., 3.]);
        let (y, stats) = batch_norm(&x, &t(&[1], vec![1.]), &t(&[1], vec![0.]), BatchNormMode::Train).unwrap();
        // eps perturbs the unit std by ~5e-6.
        assert!((y.data()[0] + 1.0).abs() < 1e-5 && (y.data()[1] - 1.0).abs() < 1e-5);
        let stats = stats.unwrap();
        assert_eq!(stats.mean, vec![2.0]);
        assert_eq!(stats.unbiased_var, vec![2.0]);
    }

    #[test]
    fn running_stats_follow_momentum() {
        let mut rs = RunningStats::<f64>::new(1);
        rs.update(
            &BatchStats {
                mean: vec![2.0],
                unbiased_var: vec![3.0],
            },
            BN_MOMENTUM,
        );
        assert!((rs.mean[0] - 0.2).abs() < 1e-12);
        assert!((rs.var[0] - (0.9 + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn eval_mode_uses_running_statistics() {
        let rs = RunningStats {
            mean: vec![1.0],
            var: vec![4.0 - BN_EPSILON],
        };
        let x = t(&[1, 1, 1, 2], vec![1., 5.]);
        let (y, stats) = batch_norm(&x, &t(&[1], vec![1.]), &t(&[1], vec![0.]), BatchNormMode::Eval(&rs)).unwrap();
        assert!(stats.is_none());
        assert!((y.data()[0]).abs() < 1e-12 && (y.data()[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn train_mode_needs_two_values_per_channel() {
        let x = t(&[1, 1, 1, 1], vec![1.]);
        assert!(batch_norm(&x, &t(&[1], vec![1.]), &t(&[1], vec![0.]), BatchNormMode::Train).is_err());
    }
}
