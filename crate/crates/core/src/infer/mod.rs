//! Weight persistence and inference pipelines.

mod pipeline;
mod weights;

pub use pipeline::{
    ensure_rgb, frame_paths, load_frames, side_by_side, sr_image, sr_patch, sr_video_roi, Interpolation,
    InterpolationUpscaler, Roi, RoiFrame, SrModel, Upscaler,
};
pub use weights::{
    decode_weights, encode_weights, load_weights, load_weights_expecting, same_weights, save_weights, FORMAT_VERSION,
    MAGIC,
};
