use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Model, ModelSpec};
use crate::tensor::ops::{affine, clamp, ln, mean, mul, scale, square, sub};
use crate::tensor::{Element, Tensor};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Real,
    Fake,
}

/// One-sided label smoothing for the discriminator targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelSmoothing {
    pub enabled: bool,
    pub real: (f64, f64),
    pub fake: (f64, f64),
}

impl Default for LabelSmoothing {
    fn default() -> Self {
        LabelSmoothing {
            enabled: true,
            real: (0.8, 1.2),
            fake: (0.0, 0.2),
        }
    }
}

impl LabelSmoothing {
    pub fn off() -> Self {
        LabelSmoothing {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("real", self.real), ("fake", self.fake)] {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::invalid(
                    "label_smoothing",
                    format!("{name} range [{lo}, {hi}] is not ordered"),
                ));
            }
        }
        Ok(())
    }
}

/// `n` discriminator targets: uniform draws from the configured range, or
/// exactly 1 / 0 when smoothing is off.
pub fn smooth_labels<R: Rng + ?Sized>(n: usize, kind: LabelKind, smoothing: &LabelSmoothing, rng: &mut R) -> Vec<f64> {
    let (lo, hi) = match (smoothing.enabled, kind) {
        (false, LabelKind::Real) => return vec![1.0; n],
        (false, LabelKind::Fake) => return vec![0.0; n],
        (true, LabelKind::Real) => smoothing.real,
        (true, LabelKind::Fake) => smoothing.fake,
    };
    (0..n).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
}

/// Mean squared difference.
pub fn pixel_loss<T: Element>(sr: &Tensor<T>, hr: &Tensor<T>) -> Result<Tensor<T>> {
    Ok(mean(&square(&sub(sr, hr)?)))
}

/// Fixed, non-trainable network whose activations define the content loss.
#[derive(Clone, Debug)]
pub struct FeatureExtractor<T: Element = f32> {
    model: Model<T>,
}

impl<T: Element> FeatureExtractor<T> {
    pub fn new(seed: u64) -> Result<Self> {
        Ok(FeatureExtractor {
            model: Model::build(&ModelSpec::FeatureExtractor, seed)?.frozen(),
        })
    }

    /// Uses the parameters of `model` (e.g. loaded from a weight file) as
    /// fixed features.
    pub fn from_model(model: &Model<T>) -> Result<Self> {
        if model.spec() != &ModelSpec::FeatureExtractor {
            return Err(Error::Spec(format!(
                "`{}` is not a feature extractor",
                model.spec().summary()
            )));
        }
        Ok(FeatureExtractor { model: model.frozen() })
    }

    pub fn model(&self) -> &Model<T> {
        &self.model
    }

    pub fn features(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.model.forward(x)
    }

    pub fn cast<U: Element>(&self) -> FeatureExtractor<U> {
        FeatureExtractor {
            model: self.model.cast::<U>().frozen(),
        }
    }
}

/// Mean squared difference of feature maps.
pub fn content_loss<T: Element>(sr: &Tensor<T>, hr: &Tensor<T>, fx: &FeatureExtractor<T>) -> Result<Tensor<T>> {
    if sr.dims() != hr.dims() {
        return Err(Error::dim(
            "content_loss",
            "shape",
            format!("{:?}", sr.dims()),
            format!("{:?}", hr.dims()),
        ));
    }
    let f_hr = fx.features(&hr.detach())?;
    pixel_loss(&fx.features(sr)?, &f_hr)
}

/// `-mean(ln d)` with `d` clamped away from 0 and 1.
pub fn generator_adversarial_loss<T: Element>(d_out: &Tensor<T>) -> Tensor<T> {
    scale(&mean(&ln(&clamp(d_out, PROB_EPS, 1.0 - PROB_EPS))), -1.0)
}

/// Mean binary cross-entropy against raw targets (which may exceed 1).
pub fn binary_cross_entropy<T: Element>(p: &Tensor<T>, targets: &[f64]) -> Result<Tensor<T>> {
    if targets.len() != p.numel() {
        return Err(Error::dim("binary_cross_entropy", "targets", p.numel(), targets.len()));
    }
    let p = clamp(p, PROB_EPS, 1.0 - PROB_EPS);
    let y = Tensor::from_vec(p.dims().to_vec(), targets.iter().map(|&v| T::from_f64(v)).collect())?;
    let one_minus_y = Tensor::from_vec(
        p.dims().to_vec(),
        targets.iter().map(|&v| T::from_f64(1.0 - v)).collect(),
    )?;
    let pos = mul(&y, &ln(&p))?;
    let neg = mul(&one_minus_y, &ln(&affine(&p, -1.0, 1.0)))?;
    Ok(scale(&mean(&crate::tensor::ops::add(&pos, &neg)?), -1.0))
}

/// Average of the real-side and fake-side cross-entropies.
pub fn discriminator_loss<T: Element>(
    d_real: &Tensor<T>,
    d_fake: &Tensor<T>,
    real_labels: &[f64],
    fake_labels: &[f64],
) -> Result<Tensor<T>> {
    let real = binary_cross_entropy(d_real, real_labels)?;
    let fake = binary_cross_entropy(d_fake, fake_labels)?;
    Ok(scale(&crate::tensor::ops::add(&real, &fake)?, 0.5))
}
