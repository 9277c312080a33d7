//! 2-D convolution and transposed convolution over NCHW tensors.
//!
//! Both lower to GEMM through an im2col buffer. `conv_transpose2d` is the
//! exact adjoint of `conv2d` with the same geometry: its forward pass is
//! conv2d's input-gradient and vice versa.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{gemm, Backward, Element, Mat, Shape, Tensor};

/// Per batch item: input gradient and kernel gradient, each if required.
type ItemGrads<T> = (Option<Vec<T>>, Option<Vec<T>>);

/// Kernel, bias and geometry of a convolution layer.
///
/// For `conv2d` the kernel is `outC x inC x kH x kW`; for `conv_transpose2d`
/// it is `inC x outC x kH x kW`.
#[derive(Clone, Debug)]
pub struct ConvParams<T: Element = f32> {
    pub kernel: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub padding: usize,
    /// Extra rows/columns appended to a transposed convolution's output.
    /// Ignored by `conv2d`.
    pub output_padding: usize,
}

impl<T: Element> ConvParams<T> {
    pub fn new(kernel: Tensor<T>, bias: Option<Tensor<T>>, stride: usize, padding: usize) -> Self {
        ConvParams {
            kernel,
            bias,
            stride,
            padding,
            output_padding: 0,
        }
    }

    pub fn with_output_padding(mut self, output_padding: usize) -> Self {
        self.output_padding = output_padding;
        self
    }

    fn kernel_dims(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        let dims = self.kernel.nchw(op)?;
        if self.stride == 0 {
            return Err(Error::invalid(op, "stride must be >= 1"));
        }
        Ok(dims)
    }

    fn check_bias(&self, op: &'static str, channels: usize) -> Result<()> {
        if let Some(b) = &self.bias {
            if b.dims() != [channels] {
                return Err(Error::dim(
                    op,
                    "bias",
                    format!("[{channels}]"),
                    format!("{:?}", b.dims()),
                ));
            }
        }
        Ok(())
    }
}

/// Geometry relating a "large" image to the grid of kernel placements on it.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Geometry {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    /// Output positions `o` for which `o * stride + k - pad` lies in `[0, n)`.
    fn valid_range(k: usize, stride: usize, pad: usize, n: usize, out: usize) -> (usize, usize) {
        let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
        let hi = if n + pad > k {
            ((n + pad - k - 1) / stride + 1).min(out)
        } else {
            0
        };
        (lo.min(hi), hi)
    }
}

/// Unfolds `x` (`channels x h x w`) into `cols` (`rows x oh*ow`).
pub(crate) fn im2col<T: Element>(x: &[T], g: &Geometry, cols: &mut [T]) {
    let ncols = g.cols();
    for c in 0..g.channels {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let (ylo, yhi) = Geometry::valid_range(ki, g.stride, g.pad, g.h, g.oh);
            for kj in 0..g.kw {
                let (xlo, xhi) = Geometry::valid_range(kj, g.stride, g.pad, g.w, g.ow);
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                dst.iter_mut().for_each(|v| *v = T::zero());
                for oy in ylo..yhi {
                    let iy = oy * g.stride + ki - g.pad;
                    let src = &plane[iy * g.w..(iy + 1) * g.w];
                    let drow = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if g.stride == 1 {
                        let ix0 = xlo + kj - g.pad;
                        drow[xlo..xhi].copy_from_slice(&src[ix0..ix0 + (xhi - xlo)]);
                    } else {
                        for ox in xlo..xhi {
                            drow[ox] = src[ox * g.stride + kj - g.pad];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-adds `cols` back into `x`.
pub(crate) fn col2im<T: Element>(cols: &[T], g: &Geometry, x: &mut [T]) {
    let ncols = g.cols();
    for c in 0..g.channels {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let (ylo, yhi) = Geometry::valid_range(ki, g.stride, g.pad, g.h, g.oh);
            for kj in 0..g.kw {
                let (xlo, xhi) = Geometry::valid_range(kj, g.stride, g.pad, g.w, g.ow);
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in ylo..yhi {
                    let iy = oy * g.stride + ki - g.pad;
                    let dst = &mut plane[iy * g.w..(iy + 1) * g.w];
                    let srow = &src[oy * g.ow..(oy + 1) * g.ow];
                    for ox in xlo..xhi {
                        dst[ox * g.stride + kj - g.pad] += srow[ox];
                    }
                }
            }
        }
    }
}

fn add_bias<T: Element>(out: &mut [T], bias: Option<&Tensor<T>>, plane: usize) {
    if let Some(b) = bias {
        for (chunk, &bv) in out.chunks_mut(plane).zip(b.data()) {
            chunk.iter_mut().for_each(|v| *v += bv);
        }
    }
}

fn bias_grad<T: Element>(grad: &[T], n: usize, c: usize, plane: usize) -> Vec<T> {
    let mut db = vec![T::zero(); c];
    for item in grad.chunks(c * plane).take(n) {
        for (ch, chunk) in item.chunks(plane).enumerate() {
            db[ch] += chunk.iter().copied().sum::<T>();
        }
    }
    db
}

/// Sums per-item weight gradients in batch order so the result does not
/// depend on how items were scheduled.
fn sum_in_order<T: Element>(parts: Vec<Vec<T>>, len: usize) -> Vec<T> {
    let mut total = vec![T::zero(); len];
    for p in parts {
        for (a, b) in total.iter_mut().zip(p) {
            *a += b;
        }
    }
    total
}

/// Cross-correlation `output = kernel ⋆ input + bias`.
pub fn conv2d<T: Element>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    const OP: &str = "conv2d";
    let (n, c, h, w) = input.nchw(OP)?;
    let (oc, ic, kh, kw) = p.kernel_dims(OP)?;
    if ic != c {
        return Err(Error::dim(OP, "channels", ic, c));
    }
    if h + 2 * p.padding < kh {
        return Err(Error::dim(OP, "height", format!(">= {}", kh), h + 2 * p.padding));
    }
    if w + 2 * p.padding < kw {
        return Err(Error::dim(OP, "width", format!(">= {}", kw), w + 2 * p.padding));
    }
    p.check_bias(OP, oc)?;
    let g = Geometry {
        channels: c,
        h,
        w,
        kh,
        kw,
        stride: p.stride,
        pad: p.padding,
        oh: (h + 2 * p.padding - kh) / p.stride + 1,
        ow: (w + 2 * p.padding - kw) / p.stride + 1,
    };
    let plane = g.oh * g.ow;
    let x = input.data();
    let k = p.kernel.data();
    let mut out = vec![T::zero(); n * oc * plane];
    out.par_chunks_mut(oc * plane).enumerate().for_each(|(i, o)| {
        let xi = &x[i * c * h * w..(i + 1) * c * h * w];
        if g.is_pointwise() {
            gemm(Mat::new(k, oc, g.rows()), Mat::new(xi, g.rows(), plane), o, false);
        } else {
            let mut cols = vec![T::zero(); g.rows() * plane];
            im2col(xi, &g, &mut cols);
            gemm(Mat::new(k, oc, g.rows()), Mat::new(&cols, g.rows(), plane), o, false);
        }
    });
    add_bias_batched(&mut out, p.bias.as_ref(), oc, plane);
    let mut parents = vec![input.clone(), p.kernel.clone()];
    if let Some(b) = &p.bias {
        parents.push(b.clone());
    }
    Ok(Tensor::from_op(
        Shape::new([n, oc, g.oh, g.ow])?,
        out,
        parents,
        Conv2dBackward { g, n, oc },
    ))
}

fn add_bias_batched<T: Element>(out: &mut [T], bias: Option<&Tensor<T>>, c: usize, plane: usize) {
    if bias.is_some() {
        for item in out.chunks_mut(c * plane) {
            add_bias(item, bias, plane);
        }
    }
}

struct Conv2dBackward {
    g: Geometry,
    n: usize,
    oc: usize,
}

impl<T: Element> Backward<T> for Conv2dBackward {
    fn backward(&self, parents: &[Tensor<T>], _out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        let g = &self.g;
        let (x, k) = (&parents[0], &parents[1]);
        let rows = g.rows();
        let plane = g.cols();
        let in_len = g.channels * g.h * g.w;
        let want_x = x.requires_grad();
        let want_k = k.requires_grad();

        let per_item: Vec<ItemGrads<T>> = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let gi = &grad[i * self.oc * plane..(i + 1) * self.oc * plane];
                let xi = &x.data()[i * in_len..(i + 1) * in_len];
                let dk = want_k.then(|| {
                    let mut dk = vec![T::zero(); self.oc * rows];
                    if g.is_pointwise() {
                        gemm(Mat::new(gi, self.oc, plane), Mat::t(xi, plane, rows), &mut dk, false);
                    } else {
                        let mut cols = vec![T::zero(); rows * plane];
                        im2col(xi, g, &mut cols);
                        gemm(Mat::new(gi, self.oc, plane), Mat::t(&cols, plane, rows), &mut dk, false);
                    }
                    dk
                });
                let dx = want_x.then(|| {
                    let mut dx = vec![T::zero(); in_len];
                    if g.is_pointwise() {
                        gemm(
                            Mat::t(k.data(), rows, self.oc),
                            Mat::new(gi, self.oc, plane),
                            &mut dx,
                            false,
                        );
                    } else {
                        let mut dcols = vec![T::zero(); rows * plane];
                        gemm(
                            Mat::t(k.data(), rows, self.oc),
                            Mat::new(gi, self.oc, plane),
                            &mut dcols,
                            false,
                        );
                        col2im(&dcols, g, &mut dx);
                    }
                    dx
                });
                (dx, dk)
            })
            .collect();

        let (dxs, dks): (Vec<_>, Vec<_>) = per_item.into_iter().unzip();
        let dx = want_x.then(|| dxs.into_iter().flatten().flatten().collect());
        let dk = want_k.then(|| sum_in_order(dks.into_iter().flatten().collect(), self.oc * rows));
        let mut res = vec![dx, dk];
        if parents.len() == 3 {
            res.push(
                parents[2]
                    .requires_grad()
                    .then(|| bias_grad(grad, self.n, self.oc, plane)),
            );
        }
        res
    }
}

/// Transposed convolution (scatter-add of kernel-scaled inputs).
///
/// Output extent is `(H - 1) * stride + kH - 2 * padding + output_padding`.
pub fn conv_transpose2d<T: Element>(input: &Tensor<T>, p: &ConvParams<T>) -> Result<Tensor<T>> {
    const OP: &str = "conv_transpose2d";
    let (n, c, h, w) = input.nchw(OP)?;
    let (ic, oc, kh, kw) = p.kernel_dims(OP)?;
    if ic != c {
        return Err(Error::dim(OP, "channels", ic, c));
    }
    if p.padding >= kh || p.padding >= kw {
        return Err(Error::invalid(
            OP,
            format!("padding {} must be smaller than kernel extent {}x{}", p.padding, kh, kw),
        ));
    }
    if p.output_padding >= p.stride {
        return Err(Error::invalid(OP, "output_padding must be smaller than stride"));
    }
    p.check_bias(OP, oc)?;
    let out_h = (h - 1) * p.stride + kh + p.output_padding - 2 * p.padding;
    let out_w = (w - 1) * p.stride + kw + p.output_padding - 2 * p.padding;
    let g = Geometry {
        channels: oc,
        h: out_h,
        w: out_w,
        kh,
        kw,
        stride: p.stride,
        pad: p.padding,
        oh: h,
        ow: w,
    };
    let rows = g.rows();
    let plane = h * w;
    let out_plane = out_h * out_w;
    let x = input.data();
    let k = p.kernel.data();
    let mut out = vec![T::zero(); n * oc * out_plane];
    out.par_chunks_mut(oc * out_plane).enumerate().for_each(|(i, o)| {
        let xi = &x[i * c * plane..(i + 1) * c * plane];
        let mut cols = vec![T::zero(); rows * plane];
        gemm(Mat::t(k, rows, ic), Mat::new(xi, ic, plane), &mut cols, false);
        col2im(&cols, &g, o);
    });
    add_bias_batched(&mut out, p.bias.as_ref(), oc, out_plane);
    let mut parents = vec![input.clone(), p.kernel.clone()];
    if let Some(b) = &p.bias {
        parents.push(b.clone());
    }
    Ok(Tensor::from_op(
        Shape::new([n, oc, out_h, out_w])?,
        out,
        parents,
        ConvTransposeBackward { g, n, ic },
    ))
}

struct ConvTransposeBackward {
    g: Geometry,
    n: usize,
    ic: usize,
}

impl<T: Element> Backward<T> for ConvTransposeBackward {
    fn backward(&self, parents: &[Tensor<T>], _out: &[T], grad: &[T]) -> Vec<Option<Vec<T>>> {
        let g = &self.g;
        let (x, k) = (&parents[0], &parents[1]);
        let rows = g.rows();
        let plane = g.cols();
        let out_len = g.channels * g.h * g.w;
        let want_x = x.requires_grad();
        let want_k = k.requires_grad();

        let per_item: Vec<ItemGrads<T>> = (0..self.n)
            .into_par_iter()
            .map(|i| {
                let gi = &grad[i * out_len..(i + 1) * out_len];
                let xi = &x.data()[i * self.ic * plane..(i + 1) * self.ic * plane];
                let mut cols = vec![T::zero(); rows * plane];
                im2col(gi, g, &mut cols);
                let dx = want_x.then(|| {
                    let mut dx = vec![T::zero(); self.ic * plane];
                    gemm(
                        Mat::new(k.data(), self.ic, rows),
                        Mat::new(&cols, rows, plane),
                        &mut dx,
                        false,
                    );
                    dx
                });
                let dk = want_k.then(|| {
                    let mut dk = vec![T::zero(); self.ic * rows];
                    gemm(Mat::new(xi, self.ic, plane), Mat::t(&cols, plane, rows), &mut dk, false);
                    dk
                });
                (dx, dk)
            })
            .collect();

        let (dxs, dks): (Vec<_>, Vec<_>) = per_item.into_iter().unzip();
        let dx = want_x.then(|| dxs.into_iter().flatten().flatten().collect());
        let dk = want_k.then(|| sum_in_order(dks.into_iter().flatten().collect(), self.ic * rows));
        let mut res = vec![dx, dk];
        if parents.len() == 3 {
            res.push(
                parents[2]
                    .requires_grad()
                    .then(|| bias_grad(grad, self.n, g.channels, g.h * g.w)),
            );
        }
        res
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(dims: &[usize], data: Vec<f64>) -> Tensor<f64> {
        Tensor::from_vec(dims.to_vec(), data).unwrap()
    }

    /// Direct scatter-add definition of the transposed convolution.
    fn scatter_add_oracle(
        x: &[f64],
        h: usize,
        w: usize,
        k: &[f64],
        kh: usize,
        kw: usize,
        s: usize,
    ) -> (Vec<f64>, usize, usize) {
        let oh = (h - 1) * s + kh;
        let ow = (w - 1) * s + kw;
        let mut out = vec![0.0; oh * ow];
        for y in 0..h {
            for x0 in 0..w {
                for i in 0..kh {
                    for j in 0..kw {
                        out[(y * s + i) * ow + x0 * s + j] += x[y * w + x0] * k[i * kw + j];
                    }
                }
            }
        }
        (out, oh, ow)
    }

    #[test]
    fn conv2d_identity_and_zero_kernels() {
        let x = t(&[1, 1, 2, 2], vec![1., 2., 3., 4.]);
        let id = ConvParams::new(t(&[1, 1, 1, 1], vec![1.]), Some(t(&[1], vec![0.])), 1, 0);
        assert_eq!(conv2d(&x, &id).unwrap().data(), &[1., 2., 3., 4.]);
        let zero = ConvParams::new(t(&[1, 1, 1, 1], vec![0.]), Some(t(&[1], vec![0.])), 1, 0);
        assert_eq!(conv2d(&x, &zero).unwrap().data(), &[0., 0., 0., 0.]);
    }

    #[test]
    fn conv2d_all_ones_gives_window_sums() {
        let x = t(&[1, 1, 3, 3], vec![1.; 9]);
        let p = ConvParams::new(t(&[1, 1, 2, 2], vec![1.; 4]), None, 1, 0);
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.dims(), &[1, 1, 2, 2]);
        assert_eq!(y.data(), &[4., 4., 4., 4.]);
    }

    #[test]
    fn conv2d_output_extent_formula() {
        let x = Tensor::<f64>::zeros([2, 3, 11, 8]).unwrap();
        for (k, s, pad) in [(3, 1, 1), (3, 2, 1), (5, 2, 0), (4, 3, 2)] {
            let p = ConvParams::new(Tensor::zeros([4, 3, k, k]).unwrap(), None, s, pad);
            let y = conv2d(&x, &p).unwrap();
            assert_eq!(y.dims(), &[2, 4, (11 + 2 * pad - k) / s + 1, (8 + 2 * pad - k) / s + 1]);
        }
    }

    #[test]
    fn conv2d_padding_matches_manual_zero_pad() {
        // 3x3 ones kernel with padding 1 counts in-bounds neighbours.
        let x = t(&[1, 1, 3, 3], vec![1.; 9]);
        let p = ConvParams::new(t(&[1, 1, 3, 3], vec![1.; 9]), None, 1, 1);
        let y = conv2d(&x, &p).unwrap();
        assert_eq!(y.data(), &[4., 6., 4., 6., 9., 6., 4., 6., 4.]);
    }

    #[test]
    fn conv2d_reports_offending_axis() {
        let x = Tensor::<f64>::zeros([1, 2, 4, 4]).unwrap();
        let p = ConvParams::new(Tensor::zeros([1, 3, 3, 3]).unwrap(), None, 1, 0);
        match conv2d(&x, &p) {
            Err(Error::Dimension { axis, .. }) => assert_eq!(axis, "channels"),
            other => panic!("{other:?}"),
        }
        let p = ConvParams::new(Tensor::zeros([1, 2, 5, 5]).unwrap(), None, 1, 0);
        match conv2d(&x, &p) {
            Err(Error::Dimension { axis, .. }) => assert_eq!(axis, "height"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn transposed_kernel3_stride2_has_uneven_overlap() {
        let x = t(&[1, 1, 2, 2], vec![1.; 4]);
        let p = ConvParams::new(t(&[1, 1, 3, 3], vec![1.; 9]), None, 2, 0);
        let y = conv_transpose2d(&x, &p).unwrap();
        assert_eq!(y.dims(), &[1, 1, 5, 5]);
        let (oracle, _, _) = scatter_add_oracle(&[1.; 4], 2, 2, &[1.; 9], 3, 3, 2);
        assert_eq!(y.data(), oracle.as_slice());
        #[rustfmt::skip]
        let expect = [
            1., 1., 2., 1., 1.,
            1., 1., 2., 1., 1.,
            2., 2., 4., 2., 2.,
            1., 1., 2., 1., 1.,
            1., 1., 2., 1., 1.,
        ];
        assert_eq!(y.data(), &expect);
    }

    #[test]
    fn transposed_kernel2_stride2_is_uniform() {
        let x = t(&[1, 1, 2, 2], vec![1.; 4]);
        let p = ConvParams::new(t(&[1, 1, 2, 2], vec![1.; 4]), None, 2, 0);
        let y = conv_transpose2d(&x, &p).unwrap();
        assert_eq!(y.dims(), &[1, 1, 4, 4]);
        assert!(y.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn transposed_identity_kernel() {
        let x = t(&[1, 1, 2, 3], vec![1., -2., 3., 4., 5., 6.]);
        let p = ConvParams::new(t(&[1, 1, 1, 1], vec![1.]), None, 1, 0);
        assert_eq!(conv_transpose2d(&x, &p).unwrap().data(), x.data());
    }

    #[test]
    fn transposed_matches_scatter_add_random() {
        let data: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64) - 1.5).collect();
        let kern: Vec<f64> = (0..9).map(|i| (i as f64 * 0.3).sin()).collect();
        let x = t(&[1, 1, 3, 4], data.clone());
        let p = ConvParams::new(t(&[1, 1, 3, 3], kern.clone()), None, 2, 0);
        let y = conv_transpose2d(&x, &p).unwrap();
        let (oracle, oh, ow) = scatter_add_oracle(&data, 3, 4, &kern, 3, 3, 2);
        assert_eq!(y.dims(), &[1, 1, oh, ow]);
        for (a, b) in y.data().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_output_padding_doubles_extent() {
        let x = Tensor::<f64>::ones([1, 2, 5, 7]).unwrap();
        let p = ConvParams::new(Tensor::ones([2, 3, 3, 3]).unwrap(), None, 2, 1).with_output_padding(1);
        let y = conv_transpose2d(&x, &p).unwrap();
        assert_eq!(y.dims(), &[1, 3, 10, 14]);
    }

    #[test]
    fn transposed_rejects_padding_at_kernel_extent() {
        let x = Tensor::<f64>::ones([1, 1, 2, 2]).unwrap();
        let p = ConvParams::new(Tensor::ones([1, 1, 3, 3]).unwrap(), None, 2, 3);
        assert!(matches!(conv_transpose2d(&x, &p), Err(Error::InvalidArgument { .. })));
    }
}
