//! Differentiable operations. Each returns a new [`Tensor`](super::Tensor)
//! and records its backward rule when an input requires a gradient.

mod activation;
mod conv;
mod elementwise;
mod linear;
mod norm;
mod resample;

pub use activation::{activation, prelu, Activation};
pub use conv::{conv2d, conv_transpose2d, ConvParams};
pub use elementwise::{add, affine, clamp, ln, mean, mul, reshape, scale, square, sub, sum};
pub use linear::{dense, global_avg_pool};
pub use norm::{batch_norm, BatchNormMode, BatchStats, RunningStats, BN_EPSILON, BN_MOMENTUM};
pub use resample::{pixel_shuffle, resize_bilinear, resize_nearest};
