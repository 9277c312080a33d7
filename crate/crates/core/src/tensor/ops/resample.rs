//! Spatial rearrangement and interpolation: sub-pixel shuffle, nearest and
//! bilinear upscaling by integer factors.

use crate::error::{Error, Result};
use crate::tensor::{Backward, Element, Shape, Tensor};

/// `output(n, c, r*y + dy, r*x + dx) = input(n, c*r² + dy*r + dx, y, x)`.
pub fn pixel_shuffle<T: Element>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    const OP: &str = "pixel_shuffle";
    let (n, c, h, w) = input.nchw(OP)?;
    if r == 0 {
        return Err(Error::invalid(OP, "factor must be >= 1"));
    }
    if c % (r * r) != 0 {
        return Err(Error::dim(OP, "channels", format!("multiple of {}", r * r), c));
    }
    let oc = c / (r * r);
    let x = input.data();
    let mut out = vec![T::zero(); x.len()];
    for_each_shuffle_pair(n, oc, h, w, r, |src, dst| out[dst] = x[src]);
    Ok(Tensor::from_op(
        Shape::new([n, oc, h * r, w * r])?,
        out,
        vec![input.clone()],
        PixelShuffleBackward { n, oc, h, w, r },
    ))
}

/// Calls `f(input_index, output_index)` for every element of a shuffle.
fn for_each_shuffle_pair(n: usize, oc: usize, h: usize, w: usize, r: usize, mut f: impl FnMut(usize, usize)) {
    let (oh, ow) = (h * r, w * r);
    for b in 0..n {
        for c in 0..oc {
            for dy in 0..r {
                for dx in 0..r {
                    let ic = c * r * r + dy * r + dx;
                    let src_base = (b * oc * r * r + ic) * h * w;
                    let dst_base = (b * oc + c) * oh * ow;
                    for y in 0..h {
                        for x in 0..w {
                            f(src_base + y * w + x, dst_base + (r * y + dy) * ow + r * x + dx);
                        }
                    }
                }
            }
        }
    }
}

struct PixelShuffleBackward {
    n: usize,
    oc: usize,
    h: usize,
    w: usize,
    r: usize,
}

impl<T: Element> Backward<T> for PixelShuffleBackward {
    fn backward(&self, _p: &[Tensor<T>], _out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        let mut gx = vec![T::zero(); grad.len()];
        for_each_shuffle_pair(self.n, self.oc, self.h, self.w, self.r, |src, dst| gx[src] = grad[dst]);
        vec![Some(gx)]
    }
}

/// Nearest-neighbour upscaling: `output(y, x) = input(y / r, x / r)`.
pub fn resize_nearest<T: Element>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    const OP: &str = "resize_nearest";
    let (n, c, h, w) = input.nchw(OP)?;
    if r < 1 {
        return Err(Error::invalid(OP, "factor must be >= 1"));
    }
    let (oh, ow) = (h * r, w * r);
    let x = input.data();
    let mut out = Vec::with_capacity(x.len() * r * r);
    for plane in x.chunks(h * w) {
        for oy in 0..oh {
            let row = &plane[(oy / r) * w..(oy / r + 1) * w];
            for &v in row {
                out.extend(std::iter::repeat_n(v, r));
            }
        }
    }
    Ok(Tensor::from_op(
        Shape::new([n, c, oh, ow])?,
        out,
        vec![input.clone()],
        NearestBackward { h, w, r },
    ))
}

struct NearestBackward {
    h: usize,
    w: usize,
    r: usize,
}

impl<T: Element> Backward<T> for NearestBackward {
    fn backward(&self, _p: &[Tensor<T>], _out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        let (h, w, r) = (self.h, self.w, self.r);
        let ow = w * r;
        let planes = grad.len() / (h * w * r * r);
        let mut gx = vec![T::zero(); planes * h * w];
        for (gp, xp) in grad.chunks(h * w * r * r).zip(gx.chunks_mut(h * w)) {
            for oy in 0..h * r {
                for ox in 0..ow {
                    xp[(oy / r) * w + ox / r] += gp[oy * ow + ox];
                }
            }
        }
        vec![Some(gx)]
    }
}

/// Source taps of one output coordinate: `(i0, i1, weight_of_i1)`.
fn bilinear_taps(n: usize, r: usize) -> Vec<(usize, usize, f64)> {
    (0..n * r)
        .map(|i| {
            // align_corners = false: centres at (i + 0.5) / r - 0.5.
            let src = ((i as f64 + 0.5) / r as f64 - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear upscaling (align-corners-false). Constant planes stay constant.
pub fn resize_bilinear<T: Element>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    const OP: &str = "resize_bilinear";
    let (n, c, h, w) = input.nchw(OP)?;
    if r < 1 {
        return Err(Error::invalid(OP, "factor must be >= 1"));
    }
    let ty = bilinear_taps(h, r);
    let tx = bilinear_taps(w, r);
    let (oh, ow) = (h * r, w * r);
    let x = input.data();
    let mut out = vec![T::zero(); n * c * oh * ow];
    for (xp, op) in x.chunks(h * w).zip(out.chunks_mut(oh * ow)) {
        for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
            let ly = T::from_f64(ly);
            for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                let lx = T::from_f64(lx);
                let top = xp[y0 * w + x0] + (xp[y0 * w + x1] - xp[y0 * w + x0]) * lx;
                let bot = xp[y1 * w + x0] + (xp[y1 * w + x1] - xp[y1 * w + x0]) * lx;
                op[oy * ow + ox] = top + (bot - top) * ly;
            }
        }
    }
    Ok(Tensor::from_op(
        Shape::new([n, c, oh, ow])?,
        out,
        vec![input.clone()],
        BilinearBackward { h, w, ty, tx },
    ))
}

struct BilinearBackward {
    h: usize,
    w: usize,
    ty: Vec<(usize, usize, f64)>,
    tx: Vec<(usize, usize, f64)>,
}

impl<T: Element> Backward<T> for BilinearBackward {
    fn backward(&self, _p: &[Tensor<T>], _out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        let (h, w) = (self.h, self.w);
        let (oh, ow) = (self.ty.len(), self.tx.len());
        let planes = grad.len() / (oh * ow);
        let mut gx = vec![T::zero(); planes * h * w];
        for (gp, xp) in grad.chunks(oh * ow).zip(gx.chunks_mut(h * w)) {
            for (oy, &(y0, y1, ly)) in self.ty.iter().enumerate() {
                let ly = T::from_f64(ly);
                for (ox, &(x0, x1, lx)) in self.tx.iter().enumerate() {
                    let lx = T::from_f64(lx);
                    let g = gp[oy * ow + ox];
                    let one = T::one();
                    xp[y0 * w + x0] += g * (one - ly) * (one - lx);
                    xp[y0 * w + x1] += g * (one - ly) * lx;
                    xp[y1 * w + x0] += g * ly * (one - lx);
                    xp[y1 * w + x1] += g * ly * lx;
                }
            }
        }
        vec![Some(gx)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(dims.to_vec(), data).unwrap()
    }

    #[test]
    fn pixel_shuffle_four_channels_to_block() {
        let x = t(&[1, 4, 1, 1], vec![1., 2., 3., 4.]);
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.dims(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[1., 2., 3., 4.]);
    }

    #[test]
    fn pixel_shuffle_factor_one_is_identity() {
        let x = t(&[1, 3, 2, 2], (0..12).map(f64::from).collect());
        let y = pixel_shuffle(&x, 1).unwrap();
        assert_eq!(y.dims(), x.dims());
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn pixel_shuffle_inverse_indexing_recovers_input() {
        let data: Vec<f64> = (0..16).map(|i| ((i * 37) % 11) as f64 * 0.25 - 1.0).collect();
        let x = t(&[1, 4, 2, 2], data.clone());
        let y = pixel_shuffle(&x, 2).unwrap();
        let r = 2;
        let mut back = vec![0.0; 16];
        for c in 0..4 {
            for yy in 0..2 {
                for xx in 0..2 {
                    let (dy, dx) = (c / r, c % r);
                    back[c * 4 + yy * 2 + xx] = y.data()[(r * yy + dy) * 4 + r * xx + dx];
                }
            }
        }
        assert_eq!(back, data);
    }

    #[test]
    fn pixel_shuffle_rejects_indivisible_channels() {
        let x = Tensor::<f64>::zeros([1, 3, 2, 2]).unwrap();
        assert!(matches!(
            pixel_shuffle(&x, 2),
            Err(Error::Dimension { axis: "channels", .. })
        ));
    }

    #[test]
    fn nearest_examples() {
        let y = resize_nearest(&t(&[1, 1, 1, 1], vec![5.]), 2).unwrap();
        assert_eq!(y.dims(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[5.; 4]);

        let y = resize_nearest(&t(&[1, 1, 2, 1], vec![1., 2.]), 3).unwrap();
        assert_eq!(y.dims(), &[1, 1, 6, 3]);
        let expect: Vec<f64> = [1.; 9].into_iter().chain([2.; 9]).collect();
        assert_eq!(y.data(), expect.as_slice());

        let x = t(&[1, 2, 2, 2], (0..8).map(f64::from).collect());
        assert_eq!(resize_nearest(&x, 1).unwrap().data(), x.data());
        assert!(resize_nearest(&x, 0).is_err());
    }

    #[test]
    fn bilinear_examples() {
        let y = resize_bilinear(&t(&[1, 1, 1, 2], vec![0., 1.]), 2).unwrap();
        assert_eq!(y.dims(), &[1, 1, 2, 4]);
        assert_eq!(&y.data()[..4], &[0., 0.25, 0.75, 1.]);
        assert_eq!(&y.data()[4..], &[0., 0.25, 0.75, 1.]);

        let c = t(&[1, 1, 3, 2], vec![0.3; 6]);
        for r in 1..5 {
            assert!(resize_bilinear(&c, r).unwrap().data().iter().all(|&v| v == 0.3));
        }
        let x = t(&[1, 1, 2, 2], vec![1., 2., 3., 4.]);
        assert_eq!(resize_bilinear(&x, 1).unwrap().data(), x.data());
        assert!(resize_bilinear(&x, 0).is_err());
    }
}
