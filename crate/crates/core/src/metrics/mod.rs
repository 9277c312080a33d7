//! Image quality measures.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::ImageBuffer;
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn same_shape(op: &'static str, a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    let sa = (a.height(), a.width(), a.channels());
    let sb = (b.height(), b.width(), b.channels());
    if sa != sb {
        return Err(Error::dim(op, "image", format!("{sa:?}"), format!("{sb:?}")));
    }
    Ok(())
}

/// `10 log10(peak^2 / MSE)` in dB; `+inf` for identical images.
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer, peak: f64) -> Result<f64> {
    same_shape("psnr", a, b)?;
    let n = a.data().len() as f64;
    let mse = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / n;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// Mean SSIM and mean contrast-structure term, both averaged over channels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParts {
    pub ssim: f64,
    pub contrast_structure: f64,
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    w
}

/// Separable "valid" filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, win: &[f64]) -> Vec<f64> {
    let k = win.len();
    let (oh, ow) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..k).map(|t| win[t] * plane[y * w + x + t]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|t| win[t] * rows[(y + t) * ow + x]).sum();
        }
    }
    out
}

/// Windowed SSIM with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, dynamic range 1; windows lie fully inside the image.
pub fn ssim_parts(a: &ImageBuffer, b: &ImageBuffer) -> Result<SsimParts> {
    same_shape("ssim", a, b)?;
    let (h, w, c) = (a.height(), a.width(), a.channels());
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(
            "ssim",
            format!("{w}x{h} image smaller than the {SSIM_WINDOW}px window"),
        ));
    }
    let win = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let (mut ssim_total, mut cs_total) = (0.0, 0.0);
    for ch in 0..c {
        let x: Vec<f64> = a.data().iter().skip(ch).step_by(c).map(|&v| v as f64).collect();
        let y: Vec<f64> = b.data().iter().skip(ch).step_by(c).map(|&v| v as f64).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let mx = filter_valid(&x, h, w, &win);
        let my = filter_valid(&y, h, w, &win);
        let sxx = filter_valid(&xx, h, w, &win);
        let syy = filter_valid(&yy, h, w, &win);
        let sxy = filter_valid(&xy, h, w, &win);
        let n = mx.len() as f64;
        let (mut s_sum, mut cs_sum) = (0.0, 0.0);
        for i in 0..mx.len() {
            let vx = sxx[i] - mx[i] * mx[i];
            let vy = syy[i] - my[i] * my[i];
            let cov = sxy[i] - mx[i] * my[i];
            let cs = (2.0 * cov + c2) / (vx + vy + c2);
            let lum = (2.0 * mx[i] * my[i] + c1) / (mx[i] * mx[i] + my[i] * my[i] + c1);
            s_sum += lum * cs;
            cs_sum += cs;
        }
        ssim_total += s_sum / n;
        cs_total += cs_sum / n;
    }
    Ok(SsimParts {
        ssim: ssim_total / c as f64,
        contrast_structure: cs_total / c as f64,
    })
}

pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    Ok(ssim_parts(a, b)?.ssim)
}

/// Variance of the `period^2` phase-class means, averaged over channels.
///
/// Class sums are accumulated in row-major order so images whose classes hold
/// the same value sequences (e.g. nearest-neighbour upsampling with factor
/// `period`) score exactly 0.
pub fn checkerboard_index(image: &ImageBuffer, period: usize) -> Result<f64> {
    let (h, w, c) = (image.height(), image.width(), image.channels());
    if period == 0 || h % period != 0 || w % period != 0 {
        return Err(Error::invalid(
            "checkerboard_index",
            format!("{w}x{h} not divisible by period {period}"),
        ));
    }
    let k = period * period;
    let per_class = (h * w / k) as f64;
    let mut total = 0.0;
    for ch in 0..c {
        let mut sums = vec![0.0f64; k];
        for y in 0..h {
            for x in 0..w {
                sums[(y % period) * period + x % period] += image.data()[(y * w + x) * c + ch] as f64;
            }
        }
        let means: Vec<f64> = sums.iter().map(|s| s / per_class).collect();
        let mut pair = 0.0;
        for &mi in &means {
            for &mj in &means {
                pair += (mi - mj) * (mi - mj);
            }
        }
        total += pair / (2.0 * (k * k) as f64);
    }
    Ok(total / c as f64)
}

/// Per-image quality record, one JSON object per line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr: f64,
    pub ssim: f64,
    pub checkerboard_index: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infer_ms: Option<f64>,
}

impl QualityReport {
    /// Compares `sr` against `hr`; the checkerboard index is taken on `sr`.
    pub fn evaluate(sr: &ImageBuffer, hr: &ImageBuffer, period: usize) -> Result<Self> {
        Ok(QualityReport {
            label: None,
            psnr: psnr(sr, hr, 1.0)?,
            ssim: ssim(sr, hr)?,
            checkerboard_index: checkerboard_index(sr, period)?,
            infer_ms: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

/// JSON has no infinity; identical images are written as the string "inf".
fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_infinite() && *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_f64(*v)
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("bad dB value {t:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ChannelRole;

    fn gray(h: usize, w: usize, f: impl Fn(usize, usize) -> f32) -> ImageBuffer {
        let data = (0..h * w).map(|i| f(i / w, i % w)).collect();
        ImageBuffer::new(h, w, vec![ChannelRole::Gray], data).unwrap()
    }

    #[test]
    fn psnr_reference_points() {
        let a = gray(8, 8, |_, _| 0.0);
        let b = gray(8, 8, |_, _| 1.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert_eq!(psnr(&a, &b, 1.0).unwrap(), 0.0);
        let half = gray(8, 8, |_, _| 0.5);
        assert!((psnr(&a, &half, 1.0).unwrap() - 10.0 * 4f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn ssim_identity_and_inversion() {
        let a = gray(16, 16, |y, x| ((x / 2 + y / 3) % 2) as f32);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let inv = gray(16, 16, |y, x| 1.0 - a.get(y, x, 0));
        assert!(ssim(&a, &inv).unwrap() < 0.0);
        assert!(ssim(&a, &gray(8, 8, |_, _| 0.0)).is_err());
        assert!(ssim(&gray(8, 8, |_, _| 0.0), &gray(8, 8, |_, _| 0.0)).is_err());
    }

    #[test]
    fn gaussian_window_is_normalized_and_symmetric() {
        let w = gaussian_window();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for i in 0..SSIM_WINDOW {
            assert_eq!(w[i], w[SSIM_WINDOW - 1 - i]);
        }
    }

    #[test]
    fn checkerboard_reference_points() {
        assert_eq!(checkerboard_index(&gray(8, 8, |_, _| 0.3), 4).unwrap(), 0.0);
        let stripes = gray(4, 4, |_, x| (x % 2) as f32);
        assert_eq!(checkerboard_index(&stripes, 2).unwrap(), 0.25);
        assert!(checkerboard_index(&stripes, 3).is_err());
    }

    #[test]
    fn report_round_trips_infinity() {
        let a = gray(16, 16, |y, x| ((x + y) % 3) as f32 / 2.0);
        let r = QualityReport::evaluate(&a, &a, 4).unwrap().with_label("id");
        let line = r.to_json_line();
        assert!(line.contains("\"inf\""));
        assert_eq!(serde_json::from_str::<QualityReport>(&line).unwrap(), r);
    }
}
