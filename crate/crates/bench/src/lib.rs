//! Fixtures shared by the criterion benches: the generator variants compared
//! in the latency table and deterministic synthetic inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tilesr_core::data::{bicubic_downsample, synthesize_sample, ImageBuffer};
use tilesr_core::infer::{Interpolation, InterpolationUpscaler, SrModel, Upscaler};
use tilesr_core::models::{GeneratorSpec, Model, ModelSpec, Upsampler};
use tilesr_core::Result;

/// `(id, upsampler, batch norm)` for each learned variant.
pub const VARIANTS: [(&str, Upsampler, bool); 4] = [
    ("srgan", Upsampler::SubpixelConv, true),
    ("srgan_no_bn", Upsampler::SubpixelConv, false),
    ("transposed", Upsampler::TransposedConv, false),
    ("modified", Upsampler::NearestThenConv, false),
];

/// Untrained desk-profile generators; latency does not depend on weights.
pub fn learned_variants(seed: u64) -> Result<Vec<SrModel>> {
    VARIANTS
        .iter()
        .map(|&(id, up, bn)| {
            let model = Model::build(&ModelSpec::Generator(GeneratorSpec::desk(up, bn)), seed)?;
            SrModel::new(id, model)
        })
        .collect()
}

pub fn interpolation_baselines() -> Vec<InterpolationUpscaler> {
    [Interpolation::Nearest, Interpolation::Bicubic]
        .into_iter()
        .map(|kind| InterpolationUpscaler { kind, scale: 4 })
        .collect()
}

/// Every variant and baseline behind the common trait.
pub fn all_upscalers(seed: u64) -> Result<Vec<Box<dyn Upscaler>>> {
    let mut out: Vec<Box<dyn Upscaler>> = Vec::new();
    for m in learned_variants(seed)? {
        out.push(Box::new(m));
    }
    for b in interpolation_baselines() {
        out.push(Box::new(b));
    }
    Ok(out)
}

/// A `side x side` LR crop of a bicubic-downsampled synthetic image.
pub fn lr_image(side: usize, seed: u64) -> Result<ImageBuffer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hr = synthesize_sample(&mut rng, (side * 4).max(64))?;
    bicubic_downsample(&hr, 4)?.crop(0, 0, side, side)
}

/// `n` frames of one scene drifting by a pixel per frame.
pub fn drifting_frames(side: usize, n: usize, seed: u64) -> Result<Vec<ImageBuffer>> {
    let scene = lr_image(side + n, seed)?;
    (0..n).map(|i| scene.crop(i, i, side, side)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_have_requested_shapes() {
        assert_eq!(all_upscalers(0).unwrap().len(), 6);
        let lr = lr_image(24, 1).unwrap();
        assert_eq!((lr.width(), lr.height(), lr.channels()), (24, 24, 3));
        let frames = drifting_frames(16, 5, 2).unwrap();
        assert_eq!(frames.len(), 5);
        assert_eq!(frames[4].get(0, 0, 0), frames[0].get(4, 4, 0));
    }
}
