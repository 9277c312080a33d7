use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::weights::load_weights;
use crate::data::{bicubic_upsample, nearest_upsample, stitch, tile, ChannelRole, ImageBuffer};
use crate::error::{Error, Result};
use crate::models::{Model, ModelSpec};

/// Anything that maps an LR patch to a `scale()`-times larger patch.
pub trait Upscaler: Send + Sync {
    fn label(&self) -> String;
    fn scale(&self) -> usize;
    fn upscale(&self, patch: &ImageBuffer) -> Result<ImageBuffer>;
}

/// A generator ready for inference.
#[derive(Clone, Debug)]
pub struct SrModel {
    id: String,
    model: Model<f32>,
}

impl SrModel {
    pub fn new(id: impl Into<String>, model: Model<f32>) -> Result<Self> {
        if !matches!(model.spec(), ModelSpec::Generator(_)) {
            return Err(Error::Spec(format!("`{}` is not a generator", model.spec().summary())));
        }
        Ok(SrModel { id: id.into(), model })
    }

    /// Loads a weight file; the id is the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "model".into());
        Self::new(id, load_weights(path)?)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn spec(&self) -> &crate::models::GeneratorSpec {
        match self.model.spec() {
            ModelSpec::Generator(g) => g,
            _ => unreachable!("checked in SrModel::new"),
        }
    }
}

impl Upscaler for SrModel {
    fn label(&self) -> String {
        self.id.clone()
    }

    fn scale(&self) -> usize {
        self.spec().scale
    }

    fn upscale(&self, patch: &ImageBuffer) -> Result<ImageBuffer> {
        sr_patch(self, patch)
    }
}

/// Non-learned baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    Nearest,
    Bicubic,
}

#[derive(Clone, Copy, Debug)]
pub struct InterpolationUpscaler {
    pub kind: Interpolation,
    pub scale: usize,
}

impl Upscaler for InterpolationUpscaler {
    fn label(&self) -> String {
        match self.kind {
            Interpolation::Nearest => "nearest".into(),
            Interpolation::Bicubic => "bicubic".into(),
        }
    }

    fn scale(&self) -> usize {
        self.scale
    }

    fn upscale(&self, patch: &ImageBuffer) -> Result<ImageBuffer> {
        match self.kind {
            Interpolation::Nearest => nearest_upsample(patch, self.scale),
            Interpolation::Bicubic => bicubic_upsample(patch, self.scale),
        }
    }
}

/// Maps a `[0, 1]` patch through the generator; output is clamped to `[0, 1]`.
pub fn sr_patch(model: &SrModel, lr: &ImageBuffer) -> Result<ImageBuffer> {
    let want = model.spec().in_channels;
    let input = match (lr.channels(), want) {
        (c, w) if c == w => lr.clone(),
        (1, 3) => gray_to_rgb(lr)?,
        (c, w) => return Err(Error::dim("sr_patch", "channels", w, c)),
    };
    let out = model.model.forward(&input.to_tensor::<f32>())?;
    ImageBuffer::from_tensor(&out, 0)
}

fn gray_to_rgb(img: &ImageBuffer) -> Result<ImageBuffer> {
    let data = img.data().iter().flat_map(|&v| [v, v, v]).collect();
    ImageBuffer::rgb(img.height(), img.width(), data)
}

/// Tiles `lr`, upscales every tile and stitches the result, cropping padding.
pub fn sr_image(up: &dyn Upscaler, lr: &ImageBuffer, tile_size: usize) -> Result<ImageBuffer> {
    let grid = tile(lr, tile_size)?;
    stitch(&grid.map_scaled(up.scale(), |t| up.upscale(t))?)
}

/// Axis-aligned region of interest.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Roi {
    pub fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Roi { x, y, w, h }
    }

    pub fn check(&self, width: usize, height: usize) -> Result<()> {
        if self.w == 0 || self.h == 0 || self.x + self.w > width || self.y + self.h > height {
            return Err(Error::invalid("roi", format!("{self} outside {width}x{height} frame")));
        }
        Ok(())
    }

    pub fn crop(&self, img: &ImageBuffer) -> Result<ImageBuffer> {
        self.check(img.width(), img.height())?;
        img.crop(self.x, self.y, self.w, self.h)
    }
}

impl std::fmt::Display for Roi {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{},{}", self.x, self.y, self.w, self.h)
    }
}

impl FromStr for Roi {
    type Err = Error;

    /// Parses `x,y,w,h`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split(',')
            .map(|p| p.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("roi `{s}`: {e}")))?;
        match parts[..] {
            [x, y, w, h] => Ok(Roi { x, y, w, h }),
            _ => Err(Error::Parse(format!("roi `{s}` must be x,y,w,h"))),
        }
    }
}

/// One processed video frame.
#[derive(Clone, Debug)]
pub struct RoiFrame {
    pub index: usize,
    pub sr: ImageBuffer,
    /// Original frame with the SR crop placed to its right.
    pub composite: ImageBuffer,
    pub elapsed: Duration,
}

/// Original frame on the left, `sr` on the right, black elsewhere.
pub fn side_by_side(frame: &ImageBuffer, sr: &ImageBuffer) -> Result<ImageBuffer> {
    let frame = if frame.channels() == sr.channels() {
        frame.clone()
    } else if frame.channels() == 1 {
        gray_to_rgb(frame)?
    } else {
        return Err(Error::dim("side_by_side", "channels", sr.channels(), frame.channels()));
    };
    let h = frame.height().max(sr.height());
    let mut canvas = ImageBuffer::zeros(h, frame.width() + sr.width(), sr.roles().to_vec())?;
    canvas.paste(&frame, 0, 0)?;
    canvas.paste(sr, frame.width(), 0)?;
    Ok(canvas)
}

/// Crops `roi` from every frame, upscales it and composes it next to the
/// frame. All frames are validated before any is processed; `sink` receives
/// frames in order.
pub fn sr_video_roi<F>(up: &dyn Upscaler, frames: &[ImageBuffer], roi: Roi, mut sink: F) -> Result<()>
where
    F: FnMut(RoiFrame) -> Result<()>,
{
    for (i, f) in frames.iter().enumerate() {
        roi.check(f.width(), f.height())
            .map_err(|e| Error::invalid("sr_video_roi", format!("frame {i}: {e}")))?;
    }
    for (index, frame) in frames.iter().enumerate() {
        let start = Instant::now();
        let sr = up.upscale(&roi.crop(frame)?)?;
        let composite = side_by_side(frame, &sr)?;
        let elapsed = start.elapsed();
        sink(RoiFrame {
            index,
            sr,
            composite,
            elapsed,
        })?;
    }
    Ok(())
}

/// PNG files of a directory ordered by the number in their stem (falling back
/// to name order), e.g. `frame_2.png` before `frame_10.png`.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(format!("listing {}", dir.display()), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("png")))
        .collect();
    let key = |p: &PathBuf| {
        let stem = p
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let digits: String = stem.chars().filter(char::is_ascii_digit).collect();
        (digits.parse::<u64>().unwrap_or(u64::MAX), stem)
    };
    paths.sort_by_key(key);
    if paths.is_empty() {
        return Err(Error::invalid(
            "frame_paths",
            format!("no PNG frames in {}", dir.display()),
        ));
    }
    Ok(paths)
}

pub fn load_frames(dir: &Path) -> Result<Vec<ImageBuffer>> {
    frame_paths(dir)?.iter().map(|p| ImageBuffer::load_png(p)).collect()
}

/// Grayscale images are promoted to RGB.
pub fn ensure_rgb(img: ImageBuffer) -> Result<ImageBuffer> {
    match img.channels() {
        3 => Ok(img),
        1 => gray_to_rgb(&img),
        _ => {
            let roles = img.roles().to_vec();
            if roles.iter().all(|r| *r != ChannelRole::Gray) {
                crate::data::compose_rgb(&img)
            } else {
                Err(Error::dim("ensure_rgb", "channels", 3, img.channels()))
            }
        }
    }
}
