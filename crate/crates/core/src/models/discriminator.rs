//! SRGAN-style discriminator with either a global-average-pooling head or
//! the original flatten + dense(hidden) head.

use super::model::{Ctx, Init};
use super::spec::{DiscriminatorHead, DiscriminatorSpec};
use crate::error::{Error, Result};
use crate::tensor::ops::{self, Activation};
use crate::tensor::{Element, Tensor};

pub(crate) fn declare<T: Element>(spec: &DiscriminatorSpec, init: &mut Init<T>) -> Result<()> {
    let ch = &spec.conv_block_channels;
    let mut prev = spec.in_channels;
    for (i, &c) in ch.iter().enumerate() {
        init.conv(&format!("conv.{i}"), prev, c, 3)?;
        if spec.use_bn && i > 0 {
            init.batch_norm(&format!("bn.{i}"), c)?;
        }
        prev = c;
    }
    match spec.head {
        DiscriminatorHead::Gap => init.dense("head.fc", prev, 1)?,
        DiscriminatorHead::Flatten => {
            let size = spec.input_size.expect("validated");
            let e = spec.feature_extent(size);
            init.dense("head.fc1", prev * e * e, spec.flatten_hidden)?;
            init.dense("head.fc2", spec.flatten_hidden, 1)?;
        }
    }
    Ok(())
}

pub(crate) fn forward<T: Element>(
    spec: &DiscriminatorSpec,
    ctx: &mut Ctx<'_, T>,
    input: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.nchw("discriminator")?;
    if c != spec.in_channels {
        return Err(Error::dim("discriminator", "channels", spec.in_channels, c));
    }
    if spec.head == DiscriminatorHead::Flatten {
        let size = spec.input_size.expect("validated");
        if h != size {
            return Err(Error::dim("discriminator", "height", size, h));
        }
        if w != size {
            return Err(Error::dim("discriminator", "width", size, w));
        }
    }
    let mut x = input.clone();
    for i in 0..spec.conv_block_channels.len() {
        x = ctx.conv(&format!("conv.{i}"), &x, DiscriminatorSpec::block_stride(i))?;
        if spec.use_bn && i > 0 {
            x = ctx.batch_norm(&format!("bn.{i}"), &x)?;
        }
        x = ctx.leaky(&x, spec.leaky_slope);
    }
    let logits = match spec.head {
        DiscriminatorHead::Gap => ctx.dense("head.fc", &ops::global_avg_pool(&x)?)?,
        DiscriminatorHead::Flatten => {
            let flat = ops::reshape(&x, [n, x.numel() / n])?;
            let hidden = ctx.leaky(&ctx.dense("head.fc1", &flat)?, spec.leaky_slope);
            ctx.dense("head.fc2", &hidden)?
        }
    };
    Ok(ops::activation(&logits, Activation::Sigmoid))
}
