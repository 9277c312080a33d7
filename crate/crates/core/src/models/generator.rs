//! SRGAN-style generator.
//!
//! ```text
//! head conv(k=head_kernel) + PReLU
//!   -> n x [conv3 (BN) PReLU conv3 (BN) + skip]
//!   -> conv3 (BN) + global skip
//!   -> log2(scale) x2 upsampling stages (see `Upsampler`), each + PReLU
//!   -> tail conv(k=tail_kernel) -> tanh
//! ```

use super::model::{Ctx, Init};
use super::spec::{GeneratorSpec, Upsampler};
use crate::error::Result;
use crate::tensor::ops::{self, Activation};
use crate::tensor::{Element, Tensor};

pub(crate) fn declare<T: Element>(spec: &GeneratorSpec, init: &mut Init<T>) -> Result<()> {
    let c = spec.base_channels;
    init.conv("head", spec.in_channels, c, spec.head_kernel)?;
    init.prelu("head.act")?;
    for i in 0..spec.n_res_blocks {
        init.conv(&format!("res.{i}.conv1"), c, c, 3)?;
        if spec.use_bn {
            init.batch_norm(&format!("res.{i}.bn1"), c)?;
        }
        init.prelu(&format!("res.{i}.act"))?;
        init.conv_with_gain(&format!("res.{i}.conv2"), c, c, 3, spec.residual_init_gain)?;
        if spec.use_bn {
            init.batch_norm(&format!("res.{i}.bn2"), c)?;
        }
    }
    init.conv_with_gain("body.conv", c, c, 3, spec.residual_init_gain)?;
    if spec.use_bn {
        init.batch_norm("body.bn", c)?;
    }
    for s in 0..spec.upsample_stages() {
        match spec.upsampler {
            Upsampler::SubpixelConv => init.conv(&format!("up.{s}.conv"), c, 4 * c, 3)?,
            Upsampler::TransposedConv => init.conv_transpose(&format!("up.{s}.deconv"), c, c, 3)?,
            Upsampler::NearestThenConv | Upsampler::BilinearThenConv => init.conv(&format!("up.{s}.conv"), c, c, 3)?,
        }
        init.prelu(&format!("up.{s}.act"))?;
    }
    init.conv_with_gain("tail", c, spec.out_channels, spec.tail_kernel, spec.tail_init_gain)?;
    Ok(())
}

pub(crate) fn forward<T: Element>(spec: &GeneratorSpec, ctx: &mut Ctx<'_, T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c, _, _) = input.nchw("generator")?;
    if c != spec.in_channels {
        return Err(crate::Error::dim("generator", "channels", spec.in_channels, c));
    }
    let head = ctx.prelu("head.act", &ctx.conv("head", input, 1)?)?;
    let mut x = head.clone();
    for i in 0..spec.n_res_blocks {
        let mut y = ctx.conv(&format!("res.{i}.conv1"), &x, 1)?;
        if spec.use_bn {
            y = ctx.batch_norm(&format!("res.{i}.bn1"), &y)?;
        }
        y = ctx.prelu(&format!("res.{i}.act"), &y)?;
        y = ctx.conv(&format!("res.{i}.conv2"), &y, 1)?;
        if spec.use_bn {
            y = ctx.batch_norm(&format!("res.{i}.bn2"), &y)?;
        }
        x = ops::add(&x, &y)?;
    }
    let mut y = ctx.conv("body.conv", &x, 1)?;
    if spec.use_bn {
        y = ctx.batch_norm("body.bn", &y)?;
    }
    x = ops::add(&head, &y)?;
    for s in 0..spec.upsample_stages() {
        x = match spec.upsampler {
            Upsampler::SubpixelConv => ops::pixel_shuffle(&ctx.conv(&format!("up.{s}.conv"), &x, 1)?, 2)?,
            // (H-1)*2 + 3 - 2 + 1 = 2H: exact doubling with uneven kernel coverage.
            Upsampler::TransposedConv => ctx.conv_transpose(&format!("up.{s}.deconv"), &x, 2, 1, 1)?,
            Upsampler::NearestThenConv => ctx.conv(&format!("up.{s}.conv"), &ops::resize_nearest(&x, 2)?, 1)?,
            Upsampler::BilinearThenConv => ctx.conv(&format!("up.{s}.conv"), &ops::resize_bilinear(&x, 2)?, 1)?,
        };
        x = ctx.prelu(&format!("up.{s}.act"), &x)?;
    }
    Ok(ops::activation(&ctx.conv("tail", &x, 1)?, Activation::Tanh))
}
