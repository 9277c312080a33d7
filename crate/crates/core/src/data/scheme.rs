use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::image::{ChannelRole, ImageBuffer};
use crate::error::{Error, Result};

/// Cumulative stain order: each scheme adds one role to the previous one.
pub const STAIN_ORDER: [ChannelRole; 4] = [
    ChannelRole::Microtubules,
    ChannelRole::Nucleus,
    ChannelRole::Protein,
    ChannelRole::Er,
];

/// Weight of the yellow (ER) channel added to both red and green.
pub const YELLOW_WEIGHT: f32 = 0.5;

/// Selects the first `k` stains of [`STAIN_ORDER`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChannelScheme {
    k: u8,
}

impl ChannelScheme {
    pub fn new(k: usize) -> Result<Self> {
        if !(1..=4).contains(&k) {
            return Err(Error::invalid("channel_scheme", format!("k must be in 1..=4, got {k}")));
        }
        Ok(ChannelScheme { k: k as u8 })
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn roles(&self) -> &'static [ChannelRole] {
        &STAIN_ORDER[..self.k()]
    }
}

/// Composes a stain image to RGB: microtubules red, nucleus blue, protein
/// green, ER added to red and green at [`YELLOW_WEIGHT`], then clamped.
/// Plain RGB and gray inputs pass through (gray is replicated).
pub fn compose_rgb(stains: &ImageBuffer) -> Result<ImageBuffer> {
    let c = stains.channels();
    let (h, w) = (stains.height(), stains.width());
    let mut out = vec![0.0f32; h * w * 3];
    for (ch, role) in stains.roles().iter().enumerate() {
        let weights: [f32; 3] = match role {
            ChannelRole::Microtubules | ChannelRole::Red => [1.0, 0.0, 0.0],
            ChannelRole::Protein | ChannelRole::Green => [0.0, 1.0, 0.0],
            ChannelRole::Nucleus | ChannelRole::Blue => [0.0, 0.0, 1.0],
            ChannelRole::Er => [YELLOW_WEIGHT, YELLOW_WEIGHT, 0.0],
            ChannelRole::Gray => [1.0, 1.0, 1.0],
        };
        for (px, src) in out.chunks_mut(3).zip(stains.data().chunks(c)) {
            let v = src[ch];
            for k in 0..3 {
                px[k] += weights[k] * v;
            }
        }
    }
    ImageBuffer::from_clamped(h, w, ChannelRole::RGB.to_vec(), out)
}

/// Reads per-channel grayscale PNGs (given in stain order) and composes the
/// first `k` of them to RGB. RGB inputs are reduced to their mean.
pub fn load_atlas_sample(channel_paths: &[PathBuf], k: usize) -> Result<ImageBuffer> {
    let scheme = ChannelScheme::new(k)?;
    if k > channel_paths.len() {
        return Err(Error::invalid(
            "load_atlas_sample",
            format!("k = {k} but only {} channel files given", channel_paths.len()),
        ));
    }
    let mut planes = Vec::with_capacity(k);
    let mut size = None;
    for path in &channel_paths[..k] {
        let img = ImageBuffer::load_png(path)?;
        let dims = (img.height(), img.width());
        match size {
            None => size = Some(dims),
            Some(s) if s != dims => {
                return Err(Error::Image {
                    path: path.clone(),
                    reason: format!("size {}x{} differs from first channel {}x{}", dims.1, dims.0, s.1, s.0),
                })
            }
            _ => {}
        }
        planes.push(gray_plane(&img));
    }
    let (h, w) = size.expect("k >= 1");
    let mut data = vec![0.0f32; h * w * k];
    for (ch, plane) in planes.iter().enumerate() {
        for (i, &v) in plane.iter().enumerate() {
            data[i * k + ch] = v;
        }
    }
    compose_rgb(&ImageBuffer::new(h, w, scheme.roles().to_vec(), data)?)
}

fn gray_plane(img: &ImageBuffer) -> Vec<f32> {
    let c = img.channels();
    if c == 1 {
        return img.data().to_vec();
    }
    img.data()
        .chunks(c)
        .map(|px| px.iter().sum::<f32>() / c as f32)
        .collect()
}

/// One line of a dataset manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub channels: Vec<PathBuf>,
}

/// Parses a line-delimited JSON manifest; relative channel paths resolve
/// against the manifest's directory. Blank lines are skipped.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut entries = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut entry: ManifestEntry =
            serde_json::from_str(line).map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), line_no + 1)))?;
        for p in &mut entry.channels {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        entries.push(entry);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scheme_roles_are_cumulative() {
        assert_eq!(ChannelScheme::new(1).unwrap().roles(), &[ChannelRole::Microtubules]);
        assert_eq!(ChannelScheme::new(4).unwrap().roles(), &STAIN_ORDER);
        assert!(ChannelScheme::new(0).is_err());
        assert!(ChannelScheme::new(5).is_err());
    }

    #[test]
    fn yellow_is_half_red_half_green() {
        let img = ImageBuffer::new(1, 1, STAIN_ORDER.to_vec(), vec![0.2, 0.3, 0.1, 0.4]).unwrap();
        let rgb = compose_rgb(&img).unwrap();
        let want = [0.2 + 0.2, 0.1 + 0.2, 0.3];
        for (a, b) in rgb.data().iter().zip(want) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn composition_clamps() {
        let img = ImageBuffer::new(1, 1, STAIN_ORDER.to_vec(), vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        assert_eq!(compose_rgb(&img).unwrap().data(), &[1.0, 1.0, 0.0]);
    }
}
