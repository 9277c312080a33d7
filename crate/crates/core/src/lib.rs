//! Tiled single-image super-resolution.
//!
//! The crate is organized by subsystem:
//!
//! * [`tensor`]: reverse-mode differentiable tensor engine with the layer
//!   primitives the networks need.
//! * [`models`]: SRGAN-style generator and discriminator in every variant
//!   compared (upsampler kind, batch norm on/off, GAP or flatten head).
//! * [`train`]: losses, label smoothing, Adam, learning-rate schedule and the
//!   adversarial training loop.
//! * [`data`]: images, synthetic confocal-style samples, bicubic resampling,
//!   tiling and stitching.
//! * [`metrics`]: PSNR, SSIM and a checkerboard-artifact index.
//! * [`infer`]: weight files and the patch / whole-image / video-ROI pipeline.
//! * [`bench`]: latency and FPS measurement.

pub mod bench;
pub mod data;
pub mod error;
pub mod gradsuite;
pub mod infer;
pub mod metrics;
pub mod models;
pub mod tensor;
pub mod train;

pub use data::{ChannelRole, ChannelScheme, ImageBuffer, TileGrid};
pub use error::{Error, Result};
pub use infer::{SrModel, Upscaler};
pub use metrics::QualityReport;
pub use models::{DiscriminatorSpec, GeneratorSpec, Model, ModelSpec, Upsampler};
pub use tensor::{Element, Tensor};
pub use train::TrainPlan;
