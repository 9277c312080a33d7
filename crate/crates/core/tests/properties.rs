use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tilesr_core::data::{
    bicubic_downsample, make_training_pair, stitch, synthesize_sample, synthesize_stains, tile, ImageBuffer,
};
use tilesr_core::metrics::{checkerboard_index, psnr, ssim, ssim_parts};
use tilesr_core::models::{build_discriminator, DiscriminatorSpec};
use tilesr_core::tensor::ops::{self, ConvParams};
use tilesr_core::train::{learning_rate, smooth_labels, LabelKind, LabelSmoothing, TrainPlan};
use tilesr_core::Tensor;

/// Image whose values are multiples of 1/255, so f64 sums of them are exact.
fn image(h: usize, w: usize, c: usize, seed: u64) -> ImageBuffer {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let data = (0..h * w * c)
        .map(|_| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) % 256) as f32 / 255.0
        })
        .collect();
    let roles = match c {
        3 => tilesr_core::data::ChannelRole::RGB.to_vec(),
        _ => vec![tilesr_core::data::ChannelRole::Gray; c],
    };
    ImageBuffer::new(h, w, roles, data).unwrap()
}

fn tensor(dims: &[usize], seed: u64) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    let mut state = seed | 1;
    let data = (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state % 2001) as f64 / 1000.0 - 1.0
        })
        .collect();
    Tensor::from_vec(dims.to_vec(), data).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn tile_stitch_round_trip(h in 1usize..90, w in 1usize..90, c in prop::sample::select(vec![1usize, 3]),
                              size in 8usize..40, seed: u64) {
        let img = image(h, w, c, seed);
        let grid = tile(&img, size).unwrap();
        prop_assert_eq!(grid.rows * grid.cols, grid.tiles.len());
        prop_assert_eq!(stitch(&grid).unwrap(), img);
    }

    #[test]
    fn training_pairs_scale_exactly(blocks_h in 1usize..4, blocks_w in 1usize..4, seed: u64) {
        let img = image(32 * blocks_h, 32 * blocks_w, 3, seed);
        let pairs = make_training_pair(&img, 32, 4).unwrap();
        prop_assert_eq!(pairs.len(), blocks_h * blocks_w);
        for (lr, hr) in &pairs {
            prop_assert_eq!((lr.height() * 4, lr.width() * 4), (hr.height(), hr.width()));
        }
    }

    #[test]
    fn resize_nearest_preserves_channel_statistics(c in 1usize..4, h in 1usize..8, w in 1usize..8, r in 1usize..5, seed: u64) {
        let x = tensor(&[1, c, h, w], seed);
        let y = ops::resize_nearest(&x, r).unwrap();
        for ch in 0..c {
            let a = &x.data()[ch * h * w..(ch + 1) * h * w];
            let b = &y.data()[ch * h * w * r * r..(ch + 1) * h * w * r * r];
            let min = |s: &[f64]| s.iter().copied().fold(f64::INFINITY, f64::min);
            let max = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(min(a), min(b));
            prop_assert_eq!(max(a), max(b));
            // Replication multiplies every sum by exactly r^2; values are
            // multiples of 1e-3 so both means are exact to rounding.
            let ma = a.iter().sum::<f64>() / a.len() as f64;
            let mb = b.iter().sum::<f64>() / b.len() as f64;
            prop_assert!((ma - mb).abs() <= 1e-12 * ma.abs().max(1.0));
        }
    }

    #[test]
    fn pixel_shuffle_inverse_is_identity(c in 1usize..3, r in 1usize..4, h in 1usize..5, w in 1usize..5, seed: u64) {
        let x = tensor(&[2, c * r * r, h, w], seed);
        let y = ops::pixel_shuffle(&x, r).unwrap();
        let mut back = vec![0.0; x.numel()];
        for n in 0..2 {
            for ch in 0..c * r * r {
                let (oc, dy, dx) = (ch / (r * r), (ch % (r * r)) / r, ch % r);
                for yy in 0..h {
                    for xx in 0..w {
                        let src = ((n * c + oc) * h * r + yy * r + dy) * w * r + xx * r + dx;
                        back[((n * c * r * r + ch) * h + yy) * w + xx] = y.data()[src];
                    }
                }
            }
        }
        prop_assert_eq!(back, x.data().to_vec());
    }

    #[test]
    fn conv_and_transpose_are_adjoint(cin in 1usize..4, cout in 1usize..4, k in 1usize..5, stride in 1usize..3,
                                      pad in 0usize..2, h in 5usize..9, w in 5usize..9, seed: u64) {
        prop_assume!(pad < k);
        let x = tensor(&[2, cin, h, w], seed);
        let kern = tensor(&[cout, cin, k, k], seed.wrapping_add(1));
        let y_fwd = ops::conv2d(&x, &ConvParams::new(kern.clone(), None, stride, pad)).unwrap();
        let (_, _, oh, ow) = (2, cout, y_fwd.dims()[2], y_fwd.dims()[3]);
        let y = tensor(&[2, cout, oh, ow], seed.wrapping_add(2));
        let base_h = (oh - 1) * stride + k - 2 * pad;
        let base_w = (ow - 1) * stride + k - 2 * pad;
        prop_assume!(h - base_h == w - base_w);
        let p = ConvParams::new(kern, None, stride, pad).with_output_padding(h - base_h);
        let x_adj = ops::conv_transpose2d(&y, &p).unwrap();
        prop_assert_eq!(x_adj.dims(), x.dims());
        let lhs = dot(&y_fwd, &y);
        let rhs = dot(&x, &x_adj);
        prop_assert!((lhs - rhs).abs() <= 1e-6 * lhs.abs().max(rhs.abs()).max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn gap_discriminator_accepts_any_large_size(side in prop::sample::select(vec![32usize, 48, 64, 96])) {
        let mut spec = DiscriminatorSpec::desk();
        spec.conv_block_channels = vec![4, 4, 8, 8];
        let d = build_discriminator::<f32>(&spec, 0).unwrap();
        let out = d.forward(&Tensor::zeros([1, 3, side, side]).unwrap()).unwrap();
        prop_assert_eq!(out.dims(), &[1, 1]);
        prop_assert!(out.data()[0] > 0.0 && out.data()[0] < 1.0);
    }

    #[test]
    fn bicubic_keeps_constants_and_range(h in 1usize..6, w in 1usize..6, f in 1usize..5, v in 0.0f32..=1.0, seed: u64) {
        let flat = ImageBuffer::filled(h * f, w * f, 3, v).unwrap();
        let down = bicubic_downsample(&flat, f).unwrap();
        prop_assert!(down.data().iter().all(|&x| x == v));
        let noisy = bicubic_downsample(&image(h * f, w * f, 3, seed), f).unwrap();
        prop_assert!(noisy.data().iter().all(|x| (0.0..=1.0).contains(x)));
    }

    #[test]
    fn psnr_is_symmetric(seed: u64) {
        let (a, b) = (image(16, 16, 3, seed), image(16, 16, 3, seed ^ 0xff));
        prop_assert_eq!(psnr(&a, &b, 1.0).unwrap(), psnr(&b, &a, 1.0).unwrap());
    }

    #[test]
    fn ssim_bounded_and_reflexive(seed: u64) {
        let (a, b) = (image(24, 20, 3, seed), image(24, 20, 3, seed ^ 0xff));
        let s = ssim(&a, &b).unwrap();
        prop_assert!((-1.0..=1.0).contains(&s));
        prop_assert_eq!(ssim(&a, &a).unwrap(), 1.0);
    }

    /// The contrast-structure factor ignores a shared offset; the luminance
    /// factor does not (it compares means against C1), so it is excluded.
    #[test]
    fn ssim_structure_is_offset_invariant(seed: u64, offset in -0.2f32..0.2) {
        let scale = |img: &ImageBuffer| {
            let data = img.data().iter().map(|v| 0.25 + 0.5 * v).collect();
            ImageBuffer::rgb(img.height(), img.width(), data).unwrap()
        };
        let shift = |img: &ImageBuffer| {
            let data = img.data().iter().map(|v| v + offset).collect();
            ImageBuffer::rgb(img.height(), img.width(), data).unwrap()
        };
        let (a, b) = (scale(&image(20, 20, 3, seed)), scale(&image(20, 20, 3, seed ^ 1)));
        let before = ssim_parts(&a, &b).unwrap().contrast_structure;
        let after = ssim_parts(&shift(&a), &shift(&b)).unwrap().contrast_structure;
        prop_assert!((before - after).abs() < 1e-6, "{} vs {}", before, after);
    }

    #[test]
    fn checkerboard_translation_covariant(period in 1usize..5, bh in 2usize..6, bw in 2usize..6, seed: u64) {
        let (h, w) = (bh * period, bw * period);
        let img = image(h, w, 3, seed);
        // Cyclic shift by one period along both axes.
        let mut data = vec![0.0; img.data().len()];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    data[(((y + period) % h) * w + (x + period) % w) * 3 + c] = img.get(y, x, c);
                }
            }
        }
        let shifted = ImageBuffer::rgb(h, w, data).unwrap();
        prop_assert_eq!(checkerboard_index(&img, period).unwrap(), checkerboard_index(&shifted, period).unwrap());
    }

    #[test]
    fn checkerboard_zero_after_nearest(period in 1usize..5, h in 1usize..6, w in 1usize..6, seed: u64) {
        let img = image(h, w, 3, seed);
        let up = ImageBuffer::from_tensor(&ops::resize_nearest(&img.to_tensor::<f32>(), period).unwrap(), 0).unwrap();
        prop_assert_eq!(checkerboard_index(&up, period).unwrap(), 0.0);
    }

    #[test]
    fn learning_rate_takes_two_values(total in 2usize..10_000, it_frac in 0.0f64..1.0) {
        let plan = TrainPlan { total_iterations: total, ..TrainPlan::full() };
        let it = ((total as f64 * it_frac) as usize).min(total - 1);
        let lr = learning_rate(it, &plan);
        prop_assert!(lr == plan.lr_first_half || lr == plan.lr_second_half);
        prop_assert_eq!(lr == plan.lr_first_half, it < total / 2);
    }

    #[test]
    fn smoothed_labels_stay_in_range(n in 1usize..200, seed: u64) {
        let s = LabelSmoothing::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(smooth_labels(n, LabelKind::Real, &s, &mut rng).iter().all(|v| (0.8..=1.2).contains(v)));
        prop_assert!(smooth_labels(n, LabelKind::Fake, &s, &mut rng).iter().all(|v| (0.0..=0.2).contains(v)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nearest_then_conv_output_is_phase_balanced(k in 1usize..6, seed: u64) {
        // Any conv after nearest x2 on a constant image sees identical
        // neighbourhoods in every phase away from the border.
        let x = Tensor::<f64>::full([1, 1, 6, 6], 0.3).unwrap();
        let up = ops::resize_nearest(&x, 2).unwrap();
        let kern = tensor(&[1, 1, k, k], seed);
        let y = ops::conv2d(&up, &ConvParams::new(kern, None, 1, 0)).unwrap();
        let first = y.data()[0];
        prop_assert!(y.data().iter().all(|&v| v == first));
    }

    #[test]
    fn synthesis_is_deterministic(seed: u64) {
        let a = synthesize_sample(&mut ChaCha8Rng::seed_from_u64(seed), 64).unwrap();
        let b = synthesize_sample(&mut ChaCha8Rng::seed_from_u64(seed), 64).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// Interior of an all-ones transposed convolution is constant exactly when
/// the kernel extent is a multiple of the stride.
#[test]
fn transposed_conv_coverage_is_uniform_iff_divisible() {
    for k in 1..=6 {
        for s in 1..=3 {
            let x = Tensor::<f64>::ones([1, 1, 8, 8]).unwrap();
            let y =
                ops::conv_transpose2d(&x, &ConvParams::new(Tensor::ones([1, 1, k, k]).unwrap(), None, s, 0)).unwrap();
            let side = y.dims()[2];
            // Border rows/cols of width k-1 see partial coverage.
            let interior: Vec<f64> = (k - 1..side - (k - 1))
                .flat_map(|yy| (k - 1..side - (k - 1)).map(move |xx| (yy, xx)))
                .map(|(yy, xx)| y.data()[yy * side + xx])
                .collect();
            let uniform = interior.iter().all(|&v| v == interior[0]);
            assert_eq!(uniform, k % s == 0, "k {k} s {s}: {interior:?}");
        }
    }
}

#[test]
fn synthesized_schemes_are_uniform() {
    let mut counts = [0usize; 4];
    for seed in 0..4000u64 {
        let s = synthesize_stains(&mut ChaCha8Rng::seed_from_u64(seed), 64).unwrap();
        counts[s.scheme.k() - 1] += 1;
    }
    for c in counts {
        let f = c as f64 / 4000.0;
        assert!((f - 0.25).abs() <= 0.03, "{counts:?}");
    }
}
