//! Separable image resampling (bicubic, nearest) on [`ImageBuffer`]s.

use super::image::ImageBuffer;
use crate::error::{Error, Result};

/// Keys cubic convolution parameter.
pub const KEYS_A: f64 = -0.5;

/// Keys cubic convolution kernel with `a = -0.5`.
pub fn keys_kernel(x: f64) -> f64 {
    let a = KEYS_A;
    let x = x.abs();
    if x <= 1.0 {
        (a + 2.0) * x.powi(3) - (a + 3.0) * x.powi(2) + 1.0
    } else if x < 2.0 {
        a * x.powi(3) - 5.0 * a * x.powi(2) + 8.0 * a * x - 4.0 * a
    } else {
        0.0
    }
}

/// Per-output-sample `(first input index, weights)`. When shrinking the kernel
/// is stretched by the ratio (antialiasing); taps falling outside the input
/// are dropped and the rest renormalized.
fn axis_weights(n_in: usize, n_out: usize) -> Vec<(usize, Vec<f64>)> {
    let ratio = n_in as f64 / n_out as f64;
    let stretch = ratio.max(1.0);
    let support = 2.0 * stretch;
    (0..n_out)
        .map(|i| {
            let center = (i as f64 + 0.5) * ratio;
            let lo = ((center - support).floor() as i64).max(0) as usize;
            let hi = ((center + support).ceil() as i64).min(n_in as i64) as usize;
            let mut w: Vec<f64> = (lo..hi)
                .map(|j| keys_kernel((j as f64 + 0.5 - center) / stretch))
                .collect();
            let total: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= total);
            (lo, w)
        })
        .collect()
}

fn bicubic_resize(img: &ImageBuffer, out_h: usize, out_w: usize) -> Result<ImageBuffer> {
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let wx = axis_weights(w, out_w);
    let wy = axis_weights(h, out_h);
    let src = img.data();
    let mut rows = vec![0.0f64; h * out_w * c];
    for y in 0..h {
        for (ox, (start, weights)) in wx.iter().enumerate() {
            let dst = &mut rows[(y * out_w + ox) * c..(y * out_w + ox + 1) * c];
            for (t, &wt) in weights.iter().enumerate() {
                let s = (y * w + start + t) * c;
                for ch in 0..c {
                    dst[ch] += wt * src[s + ch] as f64;
                }
            }
        }
    }
    let mut out = vec![0.0f32; out_h * out_w * c];
    for (oy, (start, weights)) in wy.iter().enumerate() {
        for ox in 0..out_w {
            for ch in 0..c {
                let mut acc = 0.0f64;
                for (t, &wt) in weights.iter().enumerate() {
                    acc += wt * rows[((start + t) * out_w + ox) * c + ch];
                }
                out[(oy * out_w + ox) * c + ch] = acc as f32;
            }
        }
    }
    ImageBuffer::from_clamped(out_h, out_w, img.roles().to_vec(), out)
}

/// Antialiased bicubic downsampling by an integer factor, clamped to `[0, 1]`.
pub fn bicubic_downsample(img: &ImageBuffer, factor: usize) -> Result<ImageBuffer> {
    if factor == 0 || !img.height().is_multiple_of(factor) || !img.width().is_multiple_of(factor) {
        return Err(Error::invalid(
            "bicubic_downsample",
            format!("{}x{} not divisible by factor {factor}", img.width(), img.height()),
        ));
    }
    bicubic_resize(img, img.height() / factor, img.width() / factor)
}

/// Bicubic interpolation to `factor` times the size, clamped to `[0, 1]`.
pub fn bicubic_upsample(img: &ImageBuffer, factor: usize) -> Result<ImageBuffer> {
    if factor == 0 {
        return Err(Error::invalid("bicubic_upsample", "factor must be >= 1"));
    }
    bicubic_resize(img, img.height() * factor, img.width() * factor)
}

/// Pixel replication by an integer factor.
pub fn nearest_upsample(img: &ImageBuffer, factor: usize) -> Result<ImageBuffer> {
    if factor == 0 {
        return Err(Error::invalid("nearest_upsample", "factor must be >= 1"));
    }
    let (h, w, c) = (img.height(), img.width(), img.channels());
    let (oh, ow) = (h * factor, w * factor);
    let mut out = Vec::with_capacity(oh * ow * c);
    for y in 0..oh {
        let row = &img.data()[(y / factor) * w * c..(y / factor + 1) * w * c];
        for x in 0..ow {
            out.extend_from_slice(&row[(x / factor) * c..(x / factor + 1) * c]);
        }
    }
    ImageBuffer::new(oh, ow, img.roles().to_vec(), out)
}
