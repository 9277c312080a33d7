//! Procedural confocal-style images.

use std::f32::consts::TAU;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::image::{ChannelRole, ImageBuffer};
use super::scheme::{compose_rgb, ChannelScheme};
use crate::error::{Error, Result};

pub const MIN_SYNTH_SIZE: usize = 64;

#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub scheme: ChannelScheme,
    /// One channel per stain of `scheme`, before composition.
    pub stains: ImageBuffer,
    pub rgb: ImageBuffer,
}

/// Draws `k` uniformly from 1..=4 and renders an RGB composite.
pub fn synthesize_sample<R: Rng + ?Sized>(rng: &mut R, size: usize) -> Result<ImageBuffer> {
    Ok(synthesize_stains(rng, size)?.rgb)
}

pub fn synthesize_stains<R: Rng + ?Sized>(rng: &mut R, size: usize) -> Result<SyntheticSample> {
    let scheme = ChannelScheme::new(rng.random_range(1..=4))?;
    synthesize_with_scheme(rng, size, scheme)
}

pub fn synthesize_with_scheme<R: Rng + ?Sized>(
    rng: &mut R,
    size: usize,
    scheme: ChannelScheme,
) -> Result<SyntheticSample> {
    if size < MIN_SYNTH_SIZE {
        return Err(Error::invalid(
            "synthesize",
            format!("size {size} below {MIN_SYNTH_SIZE}"),
        ));
    }
    let k = scheme.k();
    let mut data = vec![0.0f32; size * size * k];
    for (ch, role) in scheme.roles().iter().enumerate() {
        let mut plane = Plane::new(size);
        match role {
            ChannelRole::Microtubules => filaments(rng, &mut plane),
            ChannelRole::Nucleus => nuclei(rng, &mut plane),
            ChannelRole::Protein => puncta(rng, &mut plane),
            ChannelRole::Er => reticulum(rng, &mut plane),
            _ => unreachable!("stain order only holds stain roles"),
        }
        background(rng, &mut plane);
        for (i, v) in plane.data.iter().enumerate() {
            data[i * k + ch] = *v;
        }
    }
    let stains = ImageBuffer::from_clamped(size, size, scheme.roles().to_vec(), data)?;
    let rgb = compose_rgb(&stains)?;
    Ok(SyntheticSample { scheme, stains, rgb })
}

/// `count` RGB images; image `i` uses ChaCha stream `i` of `seed`, so the
/// result does not depend on thread scheduling.
pub fn synthesize_dataset(seed: u64, count: usize, size: usize) -> Result<Vec<ImageBuffer>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            synthesize_sample(&mut rng, size)
        })
        .collect()
}

struct Plane {
    size: usize,
    data: Vec<f32>,
}

impl Plane {
    fn new(size: usize) -> Self {
        Plane {
            size,
            data: vec![0.0; size * size],
        }
    }

    /// Gaussian spot at sub-pixel `(x, y)`; `max` blends, otherwise adds.
    fn spot(&mut self, x: f32, y: f32, sigma: f32, amp: f32, max: bool) {
        let r = (3.0 * sigma).ceil() as i64;
        let (cx, cy) = (x.floor() as i64, y.floor() as i64);
        let inv = 1.0 / (2.0 * sigma * sigma);
        for py in (cy - r).max(0)..=(cy + r).min(self.size as i64 - 1) {
            for px in (cx - r).max(0)..=(cx + r).min(self.size as i64 - 1) {
                let dx = px as f32 + 0.5 - x;
                let dy = py as f32 + 0.5 - y;
                let v = amp * (-(dx * dx + dy * dy) * inv).exp();
                let cell = &mut self.data[py as usize * self.size + px as usize];
                *cell = if max { cell.max(v) } else { *cell + v };
            }
        }
    }
}

fn area_scale(size: usize) -> f32 {
    (size * size) as f32 / (128.0 * 128.0)
}

fn filaments<R: Rng + ?Sized>(rng: &mut R, plane: &mut Plane) {
    let s = plane.size as f32;
    let n = ((rng.random_range(10.0..25.0) * area_scale(plane.size)).round() as usize).max(3);
    for _ in 0..n {
        let (mut x, mut y) = (rng.random_range(0.0..s), rng.random_range(0.0..s));
        let mut theta = rng.random_range(0.0..TAU);
        let mut kappa: f32 = rng.random_range(-0.02..0.02);
        let length = s * rng.random_range(0.3..1.0);
        let sigma = rng.random_range(0.6..1.2);
        let amp = rng.random_range(0.4..1.0);
        let step = 0.7;
        for _ in 0..(length / step) as usize {
            plane.spot(x, y, sigma, amp, true);
            kappa = (kappa + rng.random_range(-0.006..0.006)).clamp(-0.05, 0.05);
            theta += kappa;
            x += step * theta.cos();
            y += step * theta.sin();
            if x < -4.0 || y < -4.0 || x > s + 4.0 || y > s + 4.0 {
                break;
            }
        }
    }
}

fn nuclei<R: Rng + ?Sized>(rng: &mut R, plane: &mut Plane) {
    let s = plane.size as f32;
    let texture = value_noise(rng, plane.size, (plane.size / 16).max(2));
    for _ in 0..rng.random_range(1..=3) {
        let (cx, cy) = (
            rng.random_range(0.15 * s..0.85 * s),
            rng.random_range(0.15 * s..0.85 * s),
        );
        let (a, b) = (s * rng.random_range(0.08..0.16), s * rng.random_range(0.08..0.16));
        let phi = rng.random_range(0.0..TAU);
        let (sin, cos) = phi.sin_cos();
        let amp = rng.random_range(0.5..0.9);
        let sharp = rng.random_range(8.0..16.0);
        for py in 0..plane.size {
            for px in 0..plane.size {
                let (dx, dy) = (px as f32 + 0.5 - cx, py as f32 + 0.5 - cy);
                let (u, v) = (dx * cos + dy * sin, -dx * sin + dy * cos);
                let rho = ((u / a).powi(2) + (v / b).powi(2)).sqrt();
                let edge = 1.0 / (1.0 + ((rho - 1.0) * sharp).exp());
                let i = py * plane.size + px;
                let val = amp * edge * (0.7 + 0.3 * texture[i]);
                plane.data[i] = plane.data[i].max(val);
            }
        }
    }
}

fn puncta<R: Rng + ?Sized>(rng: &mut R, plane: &mut Plane) {
    let s = plane.size as f32;
    let n = ((rng.random_range(40.0..120.0) * area_scale(plane.size)).round() as usize).max(5);
    for _ in 0..n {
        let (x, y) = (rng.random_range(0.0..s), rng.random_range(0.0..s));
        let sigma = rng.random_range(0.6..1.6);
        let amp = rng.random_range(0.3..1.0);
        plane.spot(x, y, sigma, amp, false);
    }
}

/// Level-set lines of smooth noise, gated by a broad cytoplasm envelope.
fn reticulum<R: Rng + ?Sized>(rng: &mut R, plane: &mut Plane) {
    let n = plane.size;
    let coarse = value_noise(rng, n, (n / 6).max(2));
    let fine = value_noise(rng, n, (n / 12).max(2));
    let envelope = value_noise(rng, n, (n / 2).max(2));
    let amp = rng.random_range(0.5..0.8);
    let width = rng.random_range(0.03..0.06);
    for i in 0..n * n {
        let f = (coarse[i] + 0.5 * fine[i]) / 1.5;
        let line = [0.3, 0.5, 0.7]
            .iter()
            .map(|level| (-((f - level) / width).powi(2)).exp())
            .fold(0.0f32, f32::max);
        let gate = smoothstep(0.3, 0.6, envelope[i]);
        plane.data[i] = amp * line * gate;
    }
}

/// Diffuse autofluorescence under the structures: a smoothly varying floor
/// of a few percent of full scale.
fn background<R: Rng + ?Sized>(rng: &mut R, plane: &mut Plane) {
    let level = rng.random_range(0.04..0.12);
    let haze = value_noise(rng, plane.size, (plane.size / 4).max(2));
    for (v, h) in plane.data.iter_mut().zip(haze) {
        let floor = level * (0.6 + 0.4 * h);
        *v = floor + (1.0 - floor) * v.min(1.0);
    }
}

fn smoothstep(lo: f32, hi: f32, x: f32) -> f32 {
    let t = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Smoothly interpolated lattice noise in `[0, 1]` with lattice spacing `cell`.
fn value_noise<R: Rng + ?Sized>(rng: &mut R, size: usize, cell: usize) -> Vec<f32> {
    let g = size / cell + 2;
    let lattice: Vec<f32> = (0..g * g).map(|_| rng.random::<f32>()).collect();
    let mut out = vec![0.0f32; size * size];
    for y in 0..size {
        let fy = y as f32 / cell as f32;
        let (iy, ty) = (fy as usize, smoothstep(0.0, 1.0, fy.fract()));
        for x in 0..size {
            let fx = x as f32 / cell as f32;
            let (ix, tx) = (fx as usize, smoothstep(0.0, 1.0, fx.fract()));
            let at = |yy: usize, xx: usize| lattice[yy * g + xx];
            let top = at(iy, ix) * (1.0 - tx) + at(iy, ix + 1) * tx;
            let bottom = at(iy + 1, ix) * (1.0 - tx) + at(iy + 1, ix + 1) * tx;
            out[y * size + x] = top * (1.0 - ty) + bottom * ty;
        }
    }
    out
}
