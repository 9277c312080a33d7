//! Fixed strided convolution stack whose activations stand in for
//! pretrained perceptual features in the content loss.

use super::model::{Ctx, Init};
use crate::error::Result;
use crate::tensor::{Element, Tensor};

/// Output channels of each stride-2 3x3 layer.
pub const FEATURE_CHANNELS: [usize; 4] = [16, 32, 64, 64];
pub const FEATURE_SLOPE: f64 = 0.2;

pub(crate) fn declare<T: Element>(init: &mut Init<T>) -> Result<()> {
    let mut prev = 3;
    for (i, &c) in FEATURE_CHANNELS.iter().enumerate() {
        init.conv(&format!("features.{i}"), prev, c, 3)?;
        prev = c;
    }
    Ok(())
}

pub(crate) fn forward<T: Element>(ctx: &mut Ctx<'_, T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    let mut x = input.clone();
    for i in 0..FEATURE_CHANNELS.len() {
        x = ctx.leaky(&ctx.conv(&format!("features.{i}"), &x, 2)?, FEATURE_SLOPE);
    }
    Ok(x)
}
