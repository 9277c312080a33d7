use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the generator doubles spatial resolution at each stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Upsampler {
    /// Strided transposed convolution (kernel 3, stride 2).
    TransposedConv,
    /// Convolution to 4x channels followed by pixel shuffle (SRGAN).
    SubpixelConv,
    /// Nearest-neighbour x2 then 3x3 convolution.
    NearestThenConv,
    /// Bilinear x2 then 3x3 convolution.
    BilinearThenConv,
}

impl Upsampler {
    pub const ALL: [Upsampler; 4] = [
        Upsampler::TransposedConv,
        Upsampler::SubpixelConv,
        Upsampler::NearestThenConv,
        Upsampler::BilinearThenConv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Upsampler::TransposedConv => "transposed_conv",
            Upsampler::SubpixelConv => "subpixel_conv",
            Upsampler::NearestThenConv => "nearest_then_conv",
            Upsampler::BilinearThenConv => "bilinear_then_conv",
        }
    }
}

impl std::str::FromStr for Upsampler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Upsampler::ALL
            .into_iter()
            .find(|u| u.name() == s)
            .ok_or_else(|| Error::Spec(format!("unknown upsampler `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorSpec {
    /// Upscale factor, a power of two realized as `log2(scale)` x2 stages.
    pub scale: usize,
    pub base_channels: usize,
    pub n_res_blocks: usize,
    pub use_bn: bool,
    pub upsampler: Upsampler,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Kernel extent of the first convolution.
    pub head_kernel: usize,
    /// Kernel extent of the output convolution.
    pub tail_kernel: usize,
    /// Multiplier on the initial weight scale of the last convolution of
    /// every residual branch (including the post-trunk convolution).
    pub residual_init_gain: f64,
    /// Multiplier on the initial weight scale of the output convolution.
    pub tail_init_gain: f64,
}

impl Default for GeneratorSpec {
    fn default() -> Self {
        GeneratorSpec {
            scale: 4,
            base_channels: 64,
            n_res_blocks: 16,
            use_bn: false,
            upsampler: Upsampler::NearestThenConv,
            in_channels: 3,
            out_channels: 3,
            head_kernel: 9,
            tail_kernel: 9,
            residual_init_gain: 0.1,
            tail_init_gain: 0.1,
        }
    }
}

impl GeneratorSpec {
    /// Original SRGAN generator: sub-pixel upsampling with batch norm.
    pub fn srgan() -> Self {
        GeneratorSpec {
            use_bn: true,
            upsampler: Upsampler::SubpixelConv,
            ..Default::default()
        }
    }

    /// Nearest-neighbour upsampling, no batch norm.
    pub fn modified() -> Self {
        GeneratorSpec::default()
    }

    /// Narrow generator sized for CPU training and tests.
    pub fn desk(upsampler: Upsampler, use_bn: bool) -> Self {
        GeneratorSpec {
            base_channels: 16,
            n_res_blocks: 4,
            use_bn,
            upsampler,
            tail_kernel: 3,
            ..Default::default()
        }
    }

    pub fn upsample_stages(&self) -> usize {
        self.scale.trailing_zeros() as usize
    }

    /// Number of batch-norm layers (two per residual block plus one after
    /// the residual trunk) when `use_bn` is set.
    pub fn bn_layers(&self) -> usize {
        if self.use_bn {
            2 * self.n_res_blocks + 1
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 || !self.scale.is_power_of_two() {
            return Err(Error::Spec(format!("scale {} is not a power of two", self.scale)));
        }
        if self.n_res_blocks == 0 {
            return Err(Error::Spec("n_res_blocks must be >= 1".into()));
        }
        if self.base_channels == 0 || self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::Spec("channel counts must be positive".into()));
        }
        for (name, k) in [("head_kernel", self.head_kernel), ("tail_kernel", self.tail_kernel)] {
            if k == 0 || k % 2 == 0 {
                return Err(Error::Spec(format!("{name} must be odd, got {k}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorHead {
    /// Global average pooling straight into one dense unit.
    Gap,
    /// Flatten, dense(hidden), leaky ReLU, dense(1). Fixes the input size.
    Flatten,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscriminatorSpec {
    pub in_channels: usize,
    /// Output channels of each 3x3 conv block; odd-indexed blocks stride 2.
    pub conv_block_channels: Vec<usize>,
    pub head: DiscriminatorHead,
    pub leaky_slope: f64,
    pub use_bn: bool,
    /// Spatial input extent; required by the flatten head.
    pub input_size: Option<usize>,
    pub flatten_hidden: usize,
}

impl Default for DiscriminatorSpec {
    fn default() -> Self {
        DiscriminatorSpec {
            in_channels: 3,
            conv_block_channels: vec![64, 64, 128, 128, 256, 256, 512, 512],
            head: DiscriminatorHead::Gap,
            leaky_slope: 0.2,
            use_bn: true,
            input_size: None,
            flatten_hidden: 1024,
        }
    }
}

impl DiscriminatorSpec {
    pub fn gap() -> Self {
        DiscriminatorSpec::default()
    }

    pub fn flatten(input_size: usize) -> Self {
        DiscriminatorSpec {
            head: DiscriminatorHead::Flatten,
            input_size: Some(input_size),
            ..Default::default()
        }
    }

    /// Narrow GAP discriminator sized for CPU training.
    pub fn desk() -> Self {
        DiscriminatorSpec {
            conv_block_channels: vec![16, 16, 32, 32, 64, 64],
            ..Default::default()
        }
    }

    pub fn block_stride(i: usize) -> usize {
        if i % 2 == 1 {
            2
        } else {
            1
        }
    }

    /// Spatial extent after the conv blocks for a square input of `size`.
    pub fn feature_extent(&self, size: usize) -> usize {
        (0..self.conv_block_channels.len()).fold(
            size,
            |s, i| {
                if Self::block_stride(i) == 2 {
                    s.div_ceil(2)
                } else {
                    s
                }
            },
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_block_channels.is_empty() || self.conv_block_channels.contains(&0) {
            return Err(Error::Spec("conv_block_channels must be non-empty and positive".into()));
        }
        if self.head == DiscriminatorHead::Flatten && self.input_size.is_none() {
            return Err(Error::Spec("flatten head requires input_size".into()));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::Spec(format!("leaky_slope {} outside [0,1)", self.leaky_slope)));
        }
        Ok(())
    }
}

/// Configuration a [`Model`](super::Model) was built from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Generator(GeneratorSpec),
    Discriminator(DiscriminatorSpec),
    /// Fixed convolutional stack used by the content loss.
    FeatureExtractor,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::Generator(g) => g.validate(),
            ModelSpec::Discriminator(d) => d.validate(),
            ModelSpec::FeatureExtractor => Ok(()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("spec serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Spec(format!("bad spec descriptor: {e}")))
    }

    /// Short human-readable description used by model listings.
    pub fn summary(&self) -> String {
        match self {
            ModelSpec::Generator(g) => format!(
                "generator x{} {} {} ch={} blocks={}",
                g.scale,
                g.upsampler.name(),
                if g.use_bn { "bn" } else { "no-bn" },
                g.base_channels,
                g.n_res_blocks
            ),
            ModelSpec::Discriminator(d) => {
                format!("discriminator {:?} head, blocks={:?}", d.head, d.conv_block_channels)
            }
            ModelSpec::FeatureExtractor => "feature extractor".into(),
        }
    }
}
