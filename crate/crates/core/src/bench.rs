//! Latency and frame-rate measurement for the three inference protocols:
//! one LR patch, a whole tiled image, and an ROI tracked through a frame
//! sequence.
//!
//! Timing uses [`Instant`]. Warmup runs are executed but never recorded.
//! Unless [`BenchOptions::threads`] says otherwise, every measurement runs
//! inside a one-thread rayon pool so results do not depend on core count.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::ImageBuffer;
use crate::error::{Error, Result};
use crate::infer::{sr_image, sr_video_roi, Roi, Upscaler};

pub const DEFAULT_WARMUP: usize = 3;
pub const MIN_RUNS: usize = 10;
pub const MIN_VIDEO_FRAMES: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Patch,
    Image,
    Video,
    /// Independent patch requests issued from several threads at once.
    Concurrent,
}

impl Protocol {
    pub fn name(self) -> &'static str {
        match self {
            Protocol::Patch => "patch",
            Protocol::Image => "image",
            Protocol::Video => "video",
            Protocol::Concurrent => "concurrent",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub label: String,
    pub protocol: Protocol,
    pub n_runs: usize,
    pub warmup_runs: usize,
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    pub fps: f64,
    /// Upscaler invocations per recorded run (tiles for `image`).
    pub calls_per_run: usize,
    pub threads: usize,
    pub samples_s: Vec<f64>,
}

impl BenchResult {
    pub fn from_samples(
        label: impl Into<String>,
        protocol: Protocol,
        samples_s: Vec<f64>,
        warmup_runs: usize,
        calls_per_run: usize,
        threads: usize,
    ) -> Result<Self> {
        if samples_s.is_empty() {
            return Err(Error::invalid("bench", "no samples recorded"));
        }
        let n = samples_s.len();
        let total: f64 = samples_s.iter().sum();
        let mut sorted = samples_s.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(BenchResult {
            label: label.into(),
            protocol,
            n_runs: n,
            warmup_runs,
            mean_s: total / n as f64,
            p50_s: percentile(&sorted, 0.50),
            p95_s: percentile(&sorted, 0.95),
            fps: n as f64 / total,
            calls_per_run,
            threads,
            samples_s,
        })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("bench result serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        serde_json::from_str(line).map_err(|e| Error::Parse(format!("bench result: {e}")))
    }
}

/// Nearest-rank percentile of an ascending slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub runs: usize,
    pub warmup: usize,
    /// Rayon threads available to one inference call.
    pub threads: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            runs: 50,
            warmup: DEFAULT_WARMUP,
            threads: 1,
        }
    }
}

impl BenchOptions {
    fn validate(&self, min_runs: usize) -> Result<()> {
        if self.runs < min_runs {
            return Err(Error::invalid(
                "bench",
                format!("runs must be >= {min_runs}, got {}", self.runs),
            ));
        }
        if self.threads == 0 {
            return Err(Error::invalid("bench", "threads must be >= 1"));
        }
        Ok(())
    }

    fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads)
            .build()
            .map_err(|e| Error::invalid("bench", e.to_string()))?;
        Ok(pool.install(f))
    }
}

fn check_finite(img: &ImageBuffer) -> Result<()> {
    if img.data().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            what: "benchmark output".into(),
            iteration: 0,
        })
    }
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed().as_secs_f64()))
}

/// Wall-clock latency of single-patch upscaling.
pub fn time_patch(up: &dyn Upscaler, patch: &ImageBuffer, opts: BenchOptions) -> Result<BenchResult> {
    opts.validate(MIN_RUNS)?;
    let samples = opts.install(|| -> Result<Vec<f64>> {
        for _ in 0..opts.warmup {
            check_finite(&up.upscale(patch)?)?;
        }
        (0..opts.runs)
            .map(|_| {
                let (out, s) = timed(|| up.upscale(patch))?;
                check_finite(&out)?;
                Ok(s)
            })
            .collect()
    })??;
    BenchResult::from_samples(up.label(), Protocol::Patch, samples, opts.warmup, 1, opts.threads)
}

/// Counts calls to the wrapped upscaler.
struct Counting<'a> {
    inner: &'a dyn Upscaler,
    calls: AtomicUsize,
}

impl Upscaler for Counting<'_> {
    fn label(&self) -> String {
        self.inner.label()
    }

    fn scale(&self) -> usize {
        self.inner.scale()
    }

    fn upscale(&self, patch: &ImageBuffer) -> Result<ImageBuffer> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.upscale(patch)
    }
}

/// End-to-end tile, upscale every tile, stitch. Returns the result of the
/// last recorded run alongside the timings.
pub fn time_whole_image(
    up: &dyn Upscaler,
    image: &ImageBuffer,
    tile_size: usize,
    opts: BenchOptions,
) -> Result<(BenchResult, ImageBuffer)> {
    opts.validate(MIN_RUNS)?;
    let counting = Counting {
        inner: up,
        calls: AtomicUsize::new(0),
    };
    let (samples, output, calls) = opts.install(|| -> Result<(Vec<f64>, ImageBuffer, usize)> {
        for _ in 0..opts.warmup {
            sr_image(&counting, image, tile_size)?;
        }
        let mut samples = Vec::with_capacity(opts.runs);
        let mut last = None;
        let mut calls = 0;
        for _ in 0..opts.runs {
            counting.calls.store(0, Ordering::Relaxed);
            let (out, s) = timed(|| sr_image(&counting, image, tile_size))?;
            calls = counting.calls.load(Ordering::Relaxed);
            samples.push(s);
            last = Some(out);
        }
        let out = last.expect("runs >= 1");
        check_finite(&out)?;
        Ok((samples, out, calls))
    })??;
    let result = BenchResult::from_samples(up.label(), Protocol::Image, samples, opts.warmup, calls, opts.threads)?;
    Ok((result, output))
}

/// Per-frame crop, upscale and composite over already-decoded frames.
///
/// `opts.runs` is ignored: every frame is one run. Warmup processes the first
/// frame `opts.warmup` times beforehand.
pub fn video_fps(up: &dyn Upscaler, frames: &[ImageBuffer], roi: Roi, opts: BenchOptions) -> Result<BenchResult> {
    if frames.len() < MIN_VIDEO_FRAMES {
        return Err(Error::invalid(
            "bench",
            format!("need at least {MIN_VIDEO_FRAMES} frames, got {}", frames.len()),
        ));
    }
    opts.validate(1)?;
    let samples = opts.install(|| -> Result<Vec<f64>> {
        let warm = vec![frames[0].clone(); opts.warmup];
        sr_video_roi(up, &warm, roi, |_| Ok(()))?;
        let mut samples = Vec::with_capacity(frames.len());
        sr_video_roi(up, frames, roi, |f| {
            check_finite(&f.sr)?;
            samples.push(f.elapsed.as_secs_f64());
            Ok(())
        })?;
        Ok(samples)
    })??;
    BenchResult::from_samples(up.label(), Protocol::Video, samples, opts.warmup, 1, opts.threads)
}

/// `opts.runs` patch requests spread over `opts.threads` threads.
///
/// Samples are per-request latencies; `fps` is requests per second of wall
/// time, not `1 / mean_s`.
pub fn concurrent_throughput(up: &dyn Upscaler, patch: &ImageBuffer, opts: BenchOptions) -> Result<BenchResult> {
    use rayon::prelude::*;
    opts.validate(MIN_RUNS)?;
    let (samples, wall) = opts.install(|| -> Result<(Vec<f64>, f64)> {
        for _ in 0..opts.warmup {
            up.upscale(patch)?;
        }
        let start = Instant::now();
        let samples = (0..opts.runs)
            .into_par_iter()
            .map(|_| {
                let (out, s) = timed(|| up.upscale(patch))?;
                check_finite(&out)?;
                Ok(s)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok((samples, start.elapsed().as_secs_f64()))
    })??;
    let mut r = BenchResult::from_samples(up.label(), Protocol::Concurrent, samples, opts.warmup, 1, opts.threads)?;
    r.fps = r.n_runs as f64 / wall;
    Ok(r)
}

/// One line describing the machine, printed above benchmark tables.
pub fn hardware_fingerprint() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let cores = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    format!(
        "{} {} | {cpu} | {cores} logical cores",
        std::env::consts::OS,
        std::env::consts::ARCH
    )
}

/// Aligned text table, one row per label: single-patch time, whole-image
/// time and video FPS. Missing measurements print as `-`.
pub fn format_table(results: &[BenchResult]) -> String {
    let mut labels: Vec<&str> = Vec::new();
    for r in results {
        if !labels.contains(&r.label.as_str()) {
            labels.push(&r.label);
        }
    }
    let cell = |label: &str, p: Protocol| {
        results
            .iter()
            .find(|r| r.label == label && r.protocol == p)
            .map(|r| match p {
                Protocol::Video | Protocol::Concurrent => format!("{:.1}", r.fps),
                _ => format!("{:.4}", r.mean_s),
            })
            .unwrap_or_else(|| "-".into())
    };
    let header = ["method", "patch time (s)", "image time (s)", "video fps"];
    let rows: Vec<[String; 4]> = labels
        .iter()
        .map(|l| {
            [
                l.to_string(),
                cell(l, Protocol::Patch),
                cell(l, Protocol::Image),
                cell(l, Protocol::Video),
            ]
        })
        .collect();
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = format!("# {}\n", hardware_fingerprint());
    let line = |cells: [&str; 4]| {
        format!(
            "{:<w0$}  {:>w1$}  {:>w2$}  {:>w3$}\n",
            cells[0],
            cells[1],
            cells[2],
            cells[3],
            w0 = widths[0],
            w1 = widths[1],
            w2 = widths[2],
            w3 = widths[3]
        )
    };
    out += &line(header);
    for row in &rows {
        out += &line([&row[0], &row[1], &row[2], &row[3]]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::infer::{Interpolation, InterpolationUpscaler};

    fn nearest() -> InterpolationUpscaler {
        InterpolationUpscaler {
            kind: Interpolation::Nearest,
            scale: 4,
        }
    }

    #[test]
    fn percentiles_and_fps() {
        let r = BenchResult::from_samples("x", Protocol::Patch, vec![0.4, 0.1, 0.2, 0.3], 3, 1, 1).unwrap();
        assert_eq!(r.p50_s, 0.2);
        assert_eq!(r.p95_s, 0.4);
        assert!((r.mean_s - 0.25).abs() < 1e-12);
        assert!((r.fps * r.mean_s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn run_count_excludes_warmup() {
        let patch = ImageBuffer::filled(16, 16, 3, 0.5).unwrap();
        let r = time_patch(
            &nearest(),
            &patch,
            BenchOptions {
                runs: 10,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.n_runs, 10);
        assert_eq!(r.samples_s.len(), 10);
        assert_eq!(r.warmup_runs, DEFAULT_WARMUP);
        assert!(time_patch(
            &nearest(),
            &patch,
            BenchOptions {
                runs: 9,
                ..Default::default()
            }
        )
        .is_err());
    }

    #[test]
    fn whole_image_counts_tiles() {
        let img = ImageBuffer::filled(128, 128, 3, 0.25).unwrap();
        let (r, out) = time_whole_image(
            &nearest(),
            &img,
            64,
            BenchOptions {
                runs: 10,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(r.calls_per_run, 4);
        assert_eq!(out, sr_image(&nearest(), &img, 64).unwrap());
    }

    #[test]
    fn video_fps_is_frames_over_total() {
        let frames = vec![ImageBuffer::filled(96, 96, 3, 0.1).unwrap(); 30];
        let r = video_fps(&nearest(), &frames, Roi::new(8, 8, 64, 64), BenchOptions::default()).unwrap();
        assert_eq!(r.n_runs, 30);
        let total: f64 = r.samples_s.iter().sum();
        assert!((r.fps - 30.0 / total).abs() < 1e-9 * r.fps);
        assert!(video_fps(
            &nearest(),
            &frames[..29],
            Roi::new(8, 8, 64, 64),
            BenchOptions::default()
        )
        .is_err());
    }

    #[test]
    fn json_round_trip_is_lossless() {
        let r = BenchResult::from_samples("a", Protocol::Video, vec![0.1, 1.0 / 3.0, 2e-7], 3, 1, 2).unwrap();
        assert_eq!(BenchResult::from_json_line(&r.to_json_line()).unwrap(), r);
    }

    #[test]
    fn table_has_one_row_per_label() {
        let a = BenchResult::from_samples("a", Protocol::Patch, vec![0.5], 0, 1, 1).unwrap();
        let b = BenchResult::from_samples("b", Protocol::Video, vec![0.04], 0, 1, 1).unwrap();
        let t = format_table(&[a, b]);
        assert_eq!(t.lines().count(), 4);
        assert!(t.contains("25.0"));
    }
}
