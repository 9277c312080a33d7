//! Losses, optimizer, schedule and the adversarial training loop.

mod dataset;
mod engine;
mod losses;
mod optim;
mod plan;

pub use dataset::{BatchSampler, PairDataset};
pub use engine::{
    nearest_baseline, run_training, validate_generator, warm_start_output_bias, IterationLog, TrainOptions,
    TrainReport, ValidationRecord,
};
pub use losses::{
    binary_cross_entropy, content_loss, discriminator_loss, generator_adversarial_loss, pixel_loss, smooth_labels,
    FeatureExtractor, LabelKind, LabelSmoothing, PROB_EPS,
};
pub use optim::{adam_update, AdamConfig, AdamState};
pub use plan::{learning_rate, LossWeights, TrainPlan};
