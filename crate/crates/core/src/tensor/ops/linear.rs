use crate::error::{Error, Result};
use crate::tensor::{gemm, Backward, Element, Mat, Shape, Tensor};

/// Spatial mean per channel: `[N, C, H, W] -> [N, C]`.
pub fn global_avg_pool<T: Element>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.nchw("global_avg_pool")?;
    let plane = h * w;
    let inv = T::from_f64(1.0 / plane as f64);
    let out: Vec<T> = input
        .data()
        .chunks(plane)
        .map(|p| p.iter().copied().sum::<T>() * inv)
        .collect();
    Ok(Tensor::from_op(
        Shape::new([n, c])?,
        out,
        vec![input.clone()],
        GapBackward { plane },
    ))
}

struct GapBackward {
    plane: usize,
}

impl<T: Element> Backward<T> for GapBackward {
    fn backward(&self, _p: &[Tensor<T>], _out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        let inv = T::from_f64(1.0 / self.plane as f64);
        let gx = grad
            .iter()
            .flat_map(|&g| std::iter::repeat_n(g * inv, self.plane))
            .collect();
        vec![Some(gx)]
    }
}

/// Affine map `[N, F] x [F, G] + [G] -> [N, G]`.
pub fn dense<T: Element>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    const OP: &str = "dense";
    let [n, f] = *input.dims() else {
        return Err(Error::dim(OP, "rank", "2 (N,F)", input.dims().len()));
    };
    let [wf, g] = *weights.dims() else {
        return Err(Error::dim(OP, "rank", "2 (F,G)", weights.dims().len()));
    };
    if wf != f {
        return Err(Error::dim(OP, "features", wf, f));
    }
    if bias.dims() != [g] {
        return Err(Error::dim(OP, "bias", format!("[{g}]"), format!("{:?}", bias.dims())));
    }
    let mut out = vec![T::zero(); n * g];
    gemm(
        Mat::new(input.data(), n, f),
        Mat::new(weights.data(), f, g),
        &mut out,
        false,
    );
    for row in out.chunks_mut(g) {
        for (o, &b) in row.iter_mut().zip(bias.data()) {
            *o += b;
        }
    }
    Ok(Tensor::from_op(
        Shape::new([n, g])?,
        out,
        vec![input.clone(), weights.clone(), bias.clone()],
        DenseBackward { n, f, g },
    ))
}

struct DenseBackward {
    n: usize,
    f: usize,
    g: usize,
}

impl<T: Element> Backward<T> for DenseBackward {
    fn backward(&self, parents: &[Tensor<T>], _out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        let (n, f, g) = (self.n, self.f, self.g);
        let (x, w) = (parents[0].data(), parents[1].data());
        let dx = parents[0].requires_grad().then(|| {
            let mut dx = vec![T::zero(); n * f];
            gemm(Mat::new(grad, n, g), Mat::t(w, g, f), &mut dx, false);
            dx
        });
        let dw = parents[1].requires_grad().then(|| {
            let mut dw = vec![T::zero(); f * g];
            gemm(Mat::t(x, f, n), Mat::new(grad, n, g), &mut dw, false);
            dw
        });
        let db = parents[2].requires_grad().then(|| {
            let mut db = vec![T::zero(); g];
            for row in grad.chunks(g) {
                for (d, &v) in db.iter_mut().zip(row) {
                    *d += v;
                }
            }
            db
        });
        vec![dx, dw, db]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(dims.to_vec(), data).unwrap()
    }

    #[test]
    fn gap_examples() {
        let y = global_avg_pool(&t(&[1, 1, 2, 2], vec![1., 2., 3., 4.])).unwrap();
        assert_eq!(y.dims(), &[1, 1]);
        assert_eq!(y.data(), &[2.5]);
        let y = global_avg_pool(&t(&[1, 2, 1, 3], vec![1., 1., 1., 0., 3., 6.])).unwrap();
        assert_eq!(y.data(), &[1., 3.]);
        for (h, w) in [(1, 1), (5, 3), (16, 16)] {
            let y = global_avg_pool(&Tensor::full([2, 3, h, w], 0.75).unwrap()).unwrap();
            assert_eq!(y.dims(), &[2, 3]);
            assert!(y.data().iter().all(|&v| v == 0.75));
        }
    }

    #[test]
    fn dense_examples() {
        let x = t(&[2, 2], vec![1., 2., 3., 4.]);
        let id = dense(&x, &t(&[2, 2], vec![1., 0., 0., 1.]), &t(&[2], vec![0., 0.])).unwrap();
        assert_eq!(id.data(), x.data());
        let b = dense(&x, &t(&[2, 2], vec![0.; 4]), &t(&[2], vec![0.5, -1.])).unwrap();
        assert_eq!(b.data(), &[0.5, -1., 0.5, -1.]);
        let y = dense(
            &t(&[1, 2], vec![1., 2.]),
            &t(&[2, 1], vec![1., 1.]),
            &t(&[1], vec![0.5]),
        )
        .unwrap();
        assert_eq!(y.data(), &[3.5]);
    }

    #[test]
    fn dense_dimension_mismatch() {
        let x = t(&[1, 3], vec![0.; 3]);
        let r = dense(&x, &t(&[2, 1], vec![0.; 2]), &t(&[1], vec![0.]));
        assert!(matches!(r, Err(Error::Dimension { axis: "features", .. })));
    }
}
