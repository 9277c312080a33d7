use std::path::Path;

use serde::{Deserialize, Serialize};

use super::losses::LabelSmoothing;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub pixel: f64,
    pub content: f64,
    pub adversarial: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            pixel: 1.0,
            content: 0.006,
            adversarial: 1e-3,
        }
    }
}

/// Training hyperparameters and schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainPlan {
    /// Includes the pretraining iterations.
    pub total_iterations: usize,
    pub iterations_per_epoch: usize,
    pub lr_first_half: f64,
    pub lr_second_half: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub batch_size: usize,
    pub label_smoothing: LabelSmoothing,
    pub loss_weights: LossWeights,
    /// Leading iterations trained on pixel and content loss only.
    pub pretrain_iterations: usize,
    pub seed: u64,
    /// Side of the HR training tiles.
    pub hr_tile: usize,
    /// Before the first step, set the generator's output bias to
    /// `atanh(mean HR value)` per channel so training starts at the data
    /// mean instead of mid-grey.
    pub warm_start_output_bias: bool,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self::full()
    }
}

impl TrainPlan {
    /// Full-scale schedule: 200 epochs of 1000 iterations.
    pub fn full() -> Self {
        TrainPlan {
            total_iterations: 200_000,
            iterations_per_epoch: 1000,
            lr_first_half: 1e-4,
            lr_second_half: 1e-5,
            adam_beta1: 0.9,
            adam_beta2: 0.99,
            adam_epsilon: 1e-8,
            batch_size: 16,
            label_smoothing: LabelSmoothing::default(),
            loss_weights: LossWeights::default(),
            pretrain_iterations: 40_000,
            seed: 0,
            hr_tile: 256,
            warm_start_output_bias: true,
        }
    }

    /// Single-CPU schedule: 500 pretraining plus 1500 adversarial iterations
    /// on 128px tiles. Learning rates keep the tenfold drop at the midpoint
    /// but start higher to make progress in 2000 steps.
    pub fn desk() -> Self {
        TrainPlan {
            total_iterations: 2000,
            iterations_per_epoch: 250,
            lr_first_half: 1e-3,
            lr_second_half: 1e-4,
            batch_size: 8,
            pretrain_iterations: 500,
            hr_tile: 128,
            ..Self::full()
        }
    }

    pub fn adversarial_iterations(&self) -> usize {
        self.total_iterations.saturating_sub(self.pretrain_iterations)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::invalid("train_plan", reason));
        if self.total_iterations == 0 || self.iterations_per_epoch == 0 || self.batch_size == 0 {
            return bad("iteration counts and batch size must be positive".into());
        }
        if self.pretrain_iterations > self.total_iterations {
            return bad(format!(
                "pretraining ({}) exceeds total iterations ({})",
                self.pretrain_iterations, self.total_iterations
            ));
        }
        for (name, v) in [
            ("lr_first_half", self.lr_first_half),
            ("lr_second_half", self.lr_second_half),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        let w = self.loss_weights;
        if [w.pixel, w.content, w.adversarial]
            .iter()
            .any(|v| !(*v >= 0.0 && v.is_finite()))
        {
            return bad("loss weights must be finite and non-negative".into());
        }
        if w.pixel + w.content + w.adversarial <= 0.0 {
            return bad("at least one loss weight must be positive".into());
        }
        self.label_smoothing.validate()
    }

    /// Reads a TOML plan; missing keys take [`TrainPlan::full`] values.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let plan: TrainPlan = toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        plan.validate()?;
        Ok(plan)
    }
}

/// `lr_first_half` before `total_iterations / 2`, `lr_second_half` from
/// there on.
pub fn learning_rate(iteration: usize, plan: &TrainPlan) -> f64 {
    if iteration < plan.total_iterations / 2 {
        plan.lr_first_half
    } else {
        plan.lr_second_half
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_boundaries() {
        let p = TrainPlan::full();
        assert_eq!(learning_rate(0, &p), 1e-4);
        assert_eq!(learning_rate(99_999, &p), 1e-4);
        assert_eq!(learning_rate(100_000, &p), 1e-5);
        assert_eq!(learning_rate(199_999, &p), 1e-5);
    }

    #[test]
    fn presets_validate() {
        TrainPlan::full().validate().unwrap();
        TrainPlan::desk().validate().unwrap();
        assert_eq!(TrainPlan::desk().adversarial_iterations(), 1500);
        let mut p = TrainPlan::desk();
        p.loss_weights = LossWeights {
            pixel: 0.0,
            content: 0.0,
            adversarial: 0.0,
        };
        assert!(p.validate().is_err());
        let mut p = TrainPlan::desk();
        p.pretrain_iterations = 5000;
        assert!(p.validate().is_err());
    }

    #[test]
    fn toml_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("plan.toml");
        std::fs::write(&path, "total_iterations = 10\npretrain_iterations = 2\n[loss_weights]\npixel = 1.0\ncontent = 0.0\nadversarial = 0.5\n").unwrap();
        let p = TrainPlan::from_toml_file(&path).unwrap();
        assert_eq!(p.total_iterations, 10);
        assert_eq!(p.loss_weights.adversarial, 0.5);
        assert_eq!(p.adam_beta2, 0.99);
    }
}
