//! Images, synthesis, resampling, and tiling.

mod image;
mod resize;
mod scheme;
mod synth;
mod tiling;

pub use image::{images_to_target, images_to_tensor, ChannelRole, ImageBuffer, SATURATED_TARGET, SIGNAL_PEAK};
pub use resize::{bicubic_downsample, bicubic_upsample, keys_kernel, nearest_upsample, KEYS_A};
pub use scheme::{
    compose_rgb, load_atlas_sample, read_manifest, ChannelScheme, ManifestEntry, STAIN_ORDER, YELLOW_WEIGHT,
};
pub use synth::{
    synthesize_dataset, synthesize_sample, synthesize_stains, synthesize_with_scheme, SyntheticSample, MIN_SYNTH_SIZE,
};
pub use tiling::{make_training_pair, stitch, tile, TileGrid, MIN_TILE};
