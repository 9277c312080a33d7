use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dataset::{BatchSampler, PairDataset};
use super::losses::{
    content_loss, discriminator_loss, generator_adversarial_loss, pixel_loss, smooth_labels, FeatureExtractor,
    LabelKind,
};
use super::optim::{adam_update, AdamConfig, AdamState};
use super::plan::{learning_rate, TrainPlan};
use crate::data::{nearest_upsample, ImageBuffer, SIGNAL_PEAK};
use crate::error::{Error, Result};
use crate::infer::save_weights;
use crate::metrics::{checkerboard_index, psnr, ssim};
use crate::models::{Mode, Model, ModelSpec};
use crate::tensor::ops::{add, scale};
use crate::tensor::Element;

/// Seed offset separating the feature extractor's stream from the models'.
const FEATURE_SEED_OFFSET: u64 = 0x5eed_f00d;
const VALIDATION_BATCH: usize = 8;

/// One line of the metric log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub lr: f64,
    pub d_loss: f64,
    pub g_adv: f64,
    pub g_content: f64,
    pub g_pixel: f64,
    pub wall_ms: f64,
}

/// Held-out quality of the generator after `iteration` completed steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub iteration: usize,
    pub psnr: f64,
    pub ssim: f64,
    pub checkerboard_index: f64,
}

#[derive(Clone, Debug, Default)]
pub struct TrainReport {
    pub iterations: Vec<IterationLog>,
    pub validations: Vec<ValidationRecord>,
    pub checkpoints: Vec<PathBuf>,
}

/// Optional side channels of a training run.
#[derive(Default)]
pub struct TrainOptions<'a> {
    pub validation: Option<&'a PairDataset>,
    /// Generator and discriminator weights are written here after every epoch.
    pub checkpoint_dir: Option<PathBuf>,
    /// Receives one JSON [`IterationLog`] per line.
    pub metric_log: Option<&'a mut dyn Write>,
    /// Receives one JSON [`ValidationRecord`] per line.
    pub validation_log: Option<&'a mut dyn Write>,
    pub feature_extractor: Option<FeatureExtractor>,
    pub on_iteration: Option<&'a mut dyn FnMut(&IterationLog)>,
}

fn check_finite(what: &str, v: f64, iteration: usize) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            what: what.to_string(),
            iteration,
        })
    }
}

fn write_line<S: Serialize>(sink: &mut Option<&mut dyn Write>, record: &S) -> Result<()> {
    if let Some(w) = sink {
        let line = serde_json::to_string(record).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io("writing training log", e))?;
    }
    Ok(())
}

/// Mean PSNR/SSIM against HR and mean checkerboard index (period = scale)
/// of `sr` outputs over the whole set.
pub fn validate_generator(gen: &Model, data: &PairDataset, iteration: usize) -> Result<ValidationRecord> {
    let scale = match gen.spec() {
        ModelSpec::Generator(g) => g.scale,
        other => return Err(Error::Spec(format!("`{}` is not a generator", other.summary()))),
    };
    let indices: Vec<usize> = (0..data.len()).collect();
    let (mut p, mut s, mut c) = (0.0, 0.0, 0.0);
    for chunk in indices.chunks(VALIDATION_BATCH) {
        let (lr, _) = data.batch::<f32>(chunk)?;
        let out = gen.forward(&lr)?;
        for (k, &i) in chunk.iter().enumerate() {
            let sr = ImageBuffer::from_tensor(&out, k)?;
            let hr = &data.pairs()[i].1;
            p += psnr(&sr, hr, 1.0)?;
            s += ssim(&sr, hr)?;
            c += checkerboard_index(&sr, scale)?;
        }
    }
    let n = data.len() as f64;
    Ok(ValidationRecord {
        iteration,
        psnr: p / n,
        ssim: s / n,
        checkerboard_index: c / n,
    })
}

/// Same measures for nearest-neighbour upsampling of the LR tiles.
pub fn nearest_baseline(data: &PairDataset, scale: usize) -> Result<ValidationRecord> {
    let (mut p, mut s, mut c) = (0.0, 0.0, 0.0);
    for (lr, hr) in data.pairs() {
        let up = nearest_upsample(lr, scale)?;
        p += psnr(&up, hr, 1.0)?;
        s += ssim(&up, hr)?;
        c += checkerboard_index(&up, scale)?;
    }
    let n = data.len() as f64;
    Ok(ValidationRecord {
        iteration: 0,
        psnr: p / n,
        ssim: s / n,
        checkerboard_index: c / n,
    })
}

/// Largest |tanh| target used when inverting channel means.
const WARM_START_LIMIT: f64 = 0.99;

/// Sets `tail.bias` to `atanh` of the per-channel HR mean (in model units).
///
/// Microscopy tiles are mostly dark, so their targets sit near the low end
/// of tanh. Starting from a zero bias, the first Adam steps drive every
/// layer's gain in the same direction and push all outputs into f32 tanh
/// saturation, where the gradient is exactly zero.
pub fn warm_start_output_bias(gen: &mut Model, data: &PairDataset) -> Result<()> {
    let c = data.pairs()[0].1.channels();
    let mut sums = vec![0.0f64; c];
    let mut count = 0usize;
    for (_, hr) in data.pairs() {
        for px in hr.data().chunks(c) {
            for (s, &v) in sums.iter_mut().zip(px) {
                *s += v as f64;
            }
        }
        count += hr.height() * hr.width();
    }
    let bias = sums
        .iter()
        .map(|s| {
            (((2.0 * s / count as f64) - 1.0) * SIGNAL_PEAK)
                .clamp(-WARM_START_LIMIT, WARM_START_LIMIT)
                .atanh() as f32
        })
        .collect();
    gen.set_param("tail.bias", bias)
}

/// Non-adversarial pretraining for `plan.pretrain_iterations`, then one
/// discriminator step and one generator step per iteration.
pub fn run_training(
    gen: &mut Model,
    disc: &mut Model,
    plan: &TrainPlan,
    data: &PairDataset,
    mut opts: TrainOptions<'_>,
) -> Result<TrainReport> {
    plan.validate()?;
    if !matches!(gen.spec(), ModelSpec::Generator(_)) || !matches!(disc.spec(), ModelSpec::Discriminator(_)) {
        return Err(Error::Spec("run_training needs a generator and a discriminator".into()));
    }
    let fx = match opts.feature_extractor.take() {
        Some(fx) => fx,
        None => FeatureExtractor::new(plan.seed.wrapping_add(FEATURE_SEED_OFFSET))?,
    };
    let adam = AdamConfig {
        beta1: plan.adam_beta1,
        beta2: plan.adam_beta2,
        epsilon: plan.adam_epsilon,
    };
    let w = plan.loss_weights;
    let mut g_state = AdamState::new(gen);
    let mut d_state = AdamState::new(disc);
    let mut sampler = BatchSampler::new(data.len(), plan.seed);
    let mut label_rng = ChaCha8Rng::seed_from_u64(plan.seed.wrapping_add(1));
    let mut report = TrainReport::default();

    if plan.warm_start_output_bias {
        warm_start_output_bias(gen, data)?;
    }
    if let Some(val) = opts.validation {
        let rec = validate_generator(gen, val, 0)?;
        write_line(&mut opts.validation_log, &rec)?;
        report.validations.push(rec);
    }

    for it in 0..plan.total_iterations {
        let start = Instant::now();
        let lr_rate = learning_rate(it, plan);
        let (lr, hr) = data.batch::<f32>(&sampler.next_batch(plan.batch_size))?;
        let n = plan.batch_size;
        let adversarial = it >= plan.pretrain_iterations;

        let (sr, g_stats) = gen.forward_with(&lr, Mode::Train)?;
        let mut d_loss_v = 0.0;
        if adversarial {
            let (d_real, real_stats) = disc.forward_with(&hr, Mode::Train)?;
            let (d_fake, fake_stats) = disc.forward_with(&sr.detach(), Mode::Train)?;
            let real_labels = smooth_labels(n, LabelKind::Real, &plan.label_smoothing, &mut label_rng);
            let fake_labels = smooth_labels(n, LabelKind::Fake, &plan.label_smoothing, &mut label_rng);
            let d_loss = discriminator_loss(&d_real, &d_fake, &real_labels, &fake_labels)?;
            d_loss_v = check_finite("discriminator loss", d_loss.item()?.as_f64(), it)?;
            let grads = d_loss.backward()?;
            adam_update(disc, &grads, &mut d_state, lr_rate, &adam)?;
            disc.update_running_stats(&real_stats, crate::tensor::ops::BN_MOMENTUM)?;
            disc.update_running_stats(&fake_stats, crate::tensor::ops::BN_MOMENTUM)?;
        }

        let pix = pixel_loss(&sr, &hr)?;
        let content = content_loss(&sr, &hr, &fx)?;
        let mut total = add(&scale(&pix, w.pixel), &scale(&content, w.content))?;
        let mut g_adv_v = 0.0;
        if adversarial {
            let (d_sr, _) = disc.frozen().forward_with(&sr, Mode::Train)?;
            let adv = generator_adversarial_loss(&d_sr);
            g_adv_v = check_finite("generator adversarial loss", adv.item()?.as_f64(), it)?;
            total = add(&total, &scale(&adv, w.adversarial))?;
        }
        let g_pixel = check_finite("pixel loss", pix.item()?.as_f64(), it)?;
        let g_content = check_finite("content loss", content.item()?.as_f64(), it)?;
        check_finite("generator loss", total.item()?.as_f64(), it)?;
        let grads = total.backward()?;
        adam_update(gen, &grads, &mut g_state, lr_rate, &adam)?;
        gen.update_running_stats(&g_stats, crate::tensor::ops::BN_MOMENTUM)?;

        let log = IterationLog {
            iteration: it,
            lr: lr_rate,
            d_loss: d_loss_v,
            g_adv: g_adv_v,
            g_content,
            g_pixel,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        write_line(&mut opts.metric_log, &log)?;
        if let Some(cb) = opts.on_iteration.as_mut() {
            cb(&log);
        }
        report.iterations.push(log);

        let done = it + 1;
        if done % plan.iterations_per_epoch == 0 || done == plan.total_iterations {
            let epoch = done.div_ceil(plan.iterations_per_epoch);
            if let Some(dir) = &opts.checkpoint_dir {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
                for (kind, model) in [("generator", &*gen), ("discriminator", &*disc)] {
                    let path = dir.join(format!("{kind}_epoch{epoch:04}.tsrw"));
                    save_weights(model, &path)?;
                    report.checkpoints.push(path);
                }
            }
            if let Some(val) = opts.validation {
                let rec = validate_generator(gen, val, done)?;
                write_line(&mut opts.validation_log, &rec)?;
                report.validations.push(rec);
            }
        }
    }
    Ok(report)
}
