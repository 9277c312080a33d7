//! Catalogue of finite-difference checks covering every differentiable op
//! and loss, shared by the test suite and the acceptance report.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::gradcheck::grad_check;
use crate::tensor::ops::{self, Activation, BatchNormMode, ConvParams, RunningStats};
use crate::tensor::Tensor;
use crate::train::{
    binary_cross_entropy, content_loss, discriminator_loss, generator_adversarial_loss, pixel_loss, FeatureExtractor,
};

pub const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;

type Make = Box<dyn Fn(&mut ChaCha8Rng) -> Sample>;
type Eval = Box<dyn Fn(&[Tensor<f64>], &[Tensor<f64>]) -> Result<Tensor<f64>>>;

/// Perturbed inputs and fixed (detached) operands for one seed.
pub struct Sample {
    pub inputs: Vec<Tensor<f64>>,
    pub fixed: Vec<Tensor<f64>>,
}

pub struct GradCase {
    pub name: String,
    make: Make,
    eval: Eval,
}

impl GradCase {
    fn new(
        name: impl Into<String>,
        make: impl Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>> + 'static,
        eval: impl Fn(&[Tensor<f64>]) -> Result<Tensor<f64>> + 'static,
    ) -> Self {
        GradCase {
            name: name.into(),
            make: Box::new(move |r| Sample {
                inputs: make(r),
                fixed: Vec::new(),
            }),
            eval: Box::new(move |t, _| eval(t)),
        }
    }

    /// Worst relative error for one seed.
    pub fn check(&self, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let Sample { inputs, fixed } = (self.make)(&mut rng);
        grad_check(|t| (self.eval)(t, &fixed), &inputs, STEP)
    }

    /// Worst relative error over `seeds`.
    pub fn worst(&self, seeds: &[u64]) -> Result<f64> {
        seeds.iter().try_fold(0.0f64, |acc, &s| Ok(acc.max(self.check(s)?)))
    }
}

/// Values in `[lo, hi)` kept at least 0.01 away from zero (the kink of
/// every piecewise op).
pub fn rand_tensor(rng: &mut ChaCha8Rng, dims: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v = rng.random_range(lo..hi);
            if v.abs() > 1e-2 {
                break v;
            }
        })
        .collect();
    Tensor::from_vec(dims.to_vec(), data).expect("dims match data")
}

/// Reduces any tensor to a scalar through fixed random weights, so every
/// output element carries an O(1) gradient.
fn project(y: &Tensor<f64>, seed: u64) -> Result<Tensor<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
    let w = rand_tensor(&mut rng, y.dims(), -1.0, 1.0);
    Ok(ops::sum(&ops::mul(y, &w)?))
}

pub fn cases() -> Vec<GradCase> {
    let mut out = Vec::new();
    for (stride, pad) in [(1, 0), (1, 1), (2, 1)] {
        out.push(GradCase::new(
            format!("conv2d s{stride} p{pad}"),
            |r| {
                vec![
                    rand_tensor(r, &[2, 3, 6, 5], -1.0, 1.0),
                    rand_tensor(r, &[4, 3, 3, 3], -0.5, 0.5),
                    rand_tensor(r, &[4], -0.5, 0.5),
                ]
            },
            move |t| {
                let p = ConvParams::new(t[1].clone(), Some(t[2].clone()), stride, pad);
                project(&ops::conv2d(&t[0], &p)?, 7)
            },
        ));
    }
    for (k, stride, pad, out_pad) in [(3, 2, 0, 0), (3, 2, 1, 1), (4, 2, 1, 0), (3, 1, 1, 0)] {
        out.push(GradCase::new(
            format!("conv_transpose2d k{k} s{stride} p{pad} op{out_pad}"),
            move |r| {
                vec![
                    rand_tensor(r, &[2, 3, 4, 5], -1.0, 1.0),
                    rand_tensor(r, &[3, 2, k, k], -0.5, 0.5),
                    rand_tensor(r, &[2], -0.5, 0.5),
                ]
            },
            move |t| {
                let p = ConvParams::new(t[1].clone(), Some(t[2].clone()), stride, pad).with_output_padding(out_pad);
                project(&ops::conv_transpose2d(&t[0], &p)?, 7)
            },
        ));
    }
    out.push(GradCase::new(
        "pixel_shuffle",
        |r| vec![rand_tensor(r, &[2, 8, 3, 3], -1.0, 1.0)],
        |t| project(&ops::pixel_shuffle(&t[0], 2)?, 1),
    ));
    out.push(GradCase::new(
        "resize_nearest",
        |r| vec![rand_tensor(r, &[1, 2, 3, 4], -1.0, 1.0)],
        |t| project(&ops::resize_nearest(&t[0], 3)?, 2),
    ));
    out.push(GradCase::new(
        "resize_bilinear",
        |r| vec![rand_tensor(r, &[1, 2, 3, 4], -1.0, 1.0)],
        |t| project(&ops::resize_bilinear(&t[0], 2)?, 3),
    ));
    let bn_inputs = |n: usize| {
        move |r: &mut ChaCha8Rng| {
            vec![
                rand_tensor(r, &[n, 2, 3, 3], -2.0, 2.0),
                rand_tensor(r, &[2], 0.5, 1.5),
                rand_tensor(r, &[2], -0.5, 0.5),
            ]
        }
    };
    out.push(GradCase::new("batch_norm train", bn_inputs(3), |t| {
        project(&ops::batch_norm(&t[0], &t[1], &t[2], BatchNormMode::Train)?.0, 4)
    }));
    out.push(GradCase::new("batch_norm eval", bn_inputs(2), |t| {
        let stats = RunningStats {
            mean: vec![0.3, -0.2],
            var: vec![0.7, 1.9],
        };
        project(&ops::batch_norm(&t[0], &t[1], &t[2], BatchNormMode::Eval(&stats))?.0, 4)
    }));
    for (name, kind) in [
        ("leaky_relu", Activation::LeakyRelu(0.2)),
        ("sigmoid", Activation::Sigmoid),
        ("tanh", Activation::Tanh),
    ] {
        out.push(GradCase::new(
            name,
            |r| vec![rand_tensor(r, &[2, 3, 4], -3.0, 3.0)],
            move |t| project(&ops::activation(&t[0], kind), 5),
        ));
    }
    out.push(GradCase::new(
        "prelu",
        |r| vec![rand_tensor(r, &[2, 3, 4], -3.0, 3.0), rand_tensor(r, &[1], 0.05, 0.5)],
        |t| project(&ops::prelu(&t[0], &t[1])?, 5),
    ));
    out.push(GradCase::new(
        "global_avg_pool",
        |r| vec![rand_tensor(r, &[2, 3, 4, 5], -1.0, 1.0)],
        |t| project(&ops::global_avg_pool(&t[0])?, 6),
    ));
    out.push(GradCase::new(
        "dense",
        |r| {
            vec![
                rand_tensor(r, &[3, 5], -1.0, 1.0),
                rand_tensor(r, &[5, 4], -1.0, 1.0),
                rand_tensor(r, &[4], -1.0, 1.0),
            ]
        },
        |t| project(&ops::dense(&t[0], &t[1], &t[2])?, 6),
    ));
    let two = |r: &mut ChaCha8Rng| vec![rand_tensor(r, &[3, 4], -2.0, 2.0), rand_tensor(r, &[3, 4], -2.0, 2.0)];
    out.push(GradCase::new("add", two, |t| project(&ops::add(&t[0], &t[1])?, 8)));
    out.push(GradCase::new("sub", two, |t| project(&ops::sub(&t[0], &t[1])?, 8)));
    out.push(GradCase::new("mul", two, |t| project(&ops::mul(&t[0], &t[1])?, 8)));
    let one = |r: &mut ChaCha8Rng| vec![rand_tensor(r, &[3, 4], -2.0, 2.0)];
    out.push(GradCase::new("affine", one, |t| {
        project(&ops::affine(&t[0], -1.7, 0.3), 8)
    }));
    out.push(GradCase::new("square", one, |t| project(&ops::square(&t[0]), 8)));
    out.push(GradCase::new("sum", one, |t| Ok(ops::sum(&t[0]))));
    out.push(GradCase::new("mean", one, |t| Ok(ops::mean(&t[0]))));
    out.push(GradCase::new("reshape", one, |t| {
        project(&ops::reshape(&t[0], [2, 6])?, 8)
    }));
    out.push(GradCase::new(
        "ln",
        |r| vec![rand_tensor(r, &[3, 4], 0.2, 3.0)],
        |t| project(&ops::ln(&t[0]), 8),
    ));
    // Bounds sit outside the sampled range, clear of the kinks.
    out.push(GradCase::new("clamp", one, |t| {
        project(&ops::clamp(&t[0], -2.5, 2.5), 8)
    }));
    out.push(GradCase::new(
        "conv2d -> tanh -> mean",
        |r| {
            vec![
                rand_tensor(r, &[1, 2, 5, 5], -1.0, 1.0),
                rand_tensor(r, &[3, 2, 3, 3], -0.5, 0.5),
            ]
        },
        |t| {
            let y = ops::conv2d(&t[0], &ConvParams::new(t[1].clone(), None, 1, 1))?;
            Ok(ops::mean(&ops::activation(&y, Activation::Tanh)))
        },
    ));

    let pair = |r: &mut ChaCha8Rng| {
        vec![
            rand_tensor(r, &[2, 3, 8, 8], -0.9, 0.9),
            rand_tensor(r, &[2, 3, 8, 8], -0.9, 0.9),
        ]
    };
    out.push(GradCase::new("pixel_loss", pair, |t| pixel_loss(&t[0], &t[1])));
    // The HR side of the content loss is a detached target, so it is fixed
    // per seed rather than perturbed. Placing it near SR keeps the loss small
    // relative to its gradient, which keeps the central difference clear of
    // cancellation.
    let fx = FeatureExtractor::<f64>::new(11).expect("extractor builds");
    out.push(GradCase {
        name: "content_loss (d/d sr)".into(),
        make: Box::new(|r| {
            let sr = rand_tensor(r, &[2, 3, 16, 16], -0.9, 0.9);
            let hr = ops::add(&sr, &rand_tensor(r, &[2, 3, 16, 16], -0.05, 0.05)).expect("same dims");
            Sample {
                inputs: vec![sr],
                fixed: vec![hr],
            }
        }),
        eval: Box::new(move |t, fixed| content_loss(&t[0], &fixed[0], &fx)),
    });
    let probs = |r: &mut ChaCha8Rng| vec![rand_tensor(r, &[4, 1], 0.05, 0.95), rand_tensor(r, &[4, 1], 0.05, 0.95)];
    out.push(GradCase::new("generator_adversarial_loss", probs, |t| {
        Ok(generator_adversarial_loss(&t[0]))
    }));
    out.push(GradCase::new("binary_cross_entropy", probs, |t| {
        binary_cross_entropy(&t[0], &[0.9, 1.1, 0.85, 1.2])
    }));
    out.push(GradCase::new("discriminator_loss", probs, |t| {
        discriminator_loss(&t[0], &t[1], &[0.9, 1.1, 0.85, 1.2], &[0.0, 0.1, 0.2, 0.05])
    }));
    out
}
