use tilesr_core::models::{
    build_discriminator, build_generator, parameter_count, DiscriminatorSpec, GeneratorSpec, Mode, Model, ModelSpec,
    Upsampler,
};
use tilesr_core::{Error, Tensor};

fn input(n: usize, size: usize, seed: u64) -> Tensor {
    let len = n * 3 * size * size;
    let data = (0..len)
        .map(|i| (((i as u64 + seed) * 2654435761 % 1000) as f32 / 500.0) - 1.0)
        .collect();
    Tensor::from_vec([n, 3, size, size], data).unwrap()
}

fn small(upsampler: Upsampler, use_bn: bool) -> GeneratorSpec {
    GeneratorSpec {
        base_channels: 8,
        n_res_blocks: 2,
        ..GeneratorSpec::desk(upsampler, use_bn)
    }
}

#[test]
fn full_size_modified_generator_maps_64_to_256() {
    let g: Model = build_generator(&GeneratorSpec::modified(), 0).unwrap();
    let out = g.forward(&input(1, 64, 0)).unwrap();
    assert_eq!(out.dims(), &[1, 3, 256, 256]);
}

#[test]
fn every_upsampler_scales_by_four() {
    for up in Upsampler::ALL {
        for bn in [false, true] {
            let g: Model = build_generator(&small(up, bn), 1).unwrap();
            let out = g.forward(&input(2, 12, 1)).unwrap();
            assert_eq!(out.dims(), &[2, 3, 48, 48], "{} bn={bn}", up.name());
            assert!(out.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn srgan_baseline_is_shape_compatible() {
    let spec = GeneratorSpec {
        base_channels: 8,
        n_res_blocks: 2,
        ..GeneratorSpec::srgan()
    };
    assert_eq!(spec.upsampler, Upsampler::SubpixelConv);
    assert!(spec.use_bn);
    let g: Model = build_generator(&spec, 2).unwrap();
    assert_eq!(g.forward(&input(1, 16, 0)).unwrap().dims(), &[1, 3, 64, 64]);
}

#[test]
fn builds_are_bit_reproducible() {
    let spec = small(Upsampler::TransposedConv, true);
    let a: Model = build_generator(&spec, 42).unwrap();
    let b: Model = build_generator(&spec, 42).unwrap();
    let c: Model = build_generator(&spec, 43).unwrap();
    let bits = |m: &Model| -> Vec<u32> {
        m.parameters()
            .flat_map(|(_, p)| p.data().iter().map(|v| v.to_bits()))
            .collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_ne!(bits(&a), bits(&c));
    let names = |m: &Model| -> Vec<String> { m.parameters().map(|(n, _)| n.to_string()).collect() };
    assert_eq!(names(&a), names(&b));
}

#[test]
fn batch_norm_costs_two_parameters_per_channel_per_layer() {
    for (c, n) in [(8, 2), (16, 4), (64, 16)] {
        let spec = |bn| GeneratorSpec {
            base_channels: c,
            n_res_blocks: n,
            use_bn: bn,
            ..GeneratorSpec::default()
        };
        let with: Model = build_generator(&spec(true), 0).unwrap();
        let without: Model = build_generator(&spec(false), 0).unwrap();
        assert_eq!(parameter_count(&with) - parameter_count(&without), 2 * c * (2 * n + 1));
        assert_eq!(without.running_stats().count(), 0);
        assert!(without
            .parameters()
            .all(|(n, _)| !n.contains(".bn") && !n.ends_with(".gamma")));
    }
}

#[test]
fn gap_head_accepts_any_size_and_is_smaller() {
    let gap: Model = build_discriminator(&DiscriminatorSpec::desk(), 0).unwrap();
    for size in [128, 256] {
        let out = gap.forward(&input(1, size, 3)).unwrap();
        assert_eq!(out.numel(), 1);
        let p = out.data()[0];
        assert!(p > 0.0 && p < 1.0);
    }
    let full_gap: Model = build_discriminator(&DiscriminatorSpec::gap(), 0).unwrap();
    let full_flat: Model = build_discriminator(&DiscriminatorSpec::flatten(256), 0).unwrap();
    assert!(parameter_count(&full_gap) < parameter_count(&full_flat));
}

#[test]
fn flatten_head_rejects_other_sizes() {
    let spec = DiscriminatorSpec {
        conv_block_channels: vec![4, 4, 8, 8],
        flatten_hidden: 16,
        ..DiscriminatorSpec::flatten(32)
    };
    let d: Model = build_discriminator(&spec, 0).unwrap();
    assert_eq!(d.forward(&input(2, 32, 0)).unwrap().dims(), &[2, 1]);
    assert!(matches!(d.forward(&input(1, 48, 0)), Err(Error::Dimension { .. })));
}

#[test]
fn forward_is_deterministic_and_bounded() {
    let g: Model = build_generator(&small(Upsampler::NearestThenConv, false), 9).unwrap();
    let zeros = Tensor::zeros([1, 3, 16, 16]).unwrap();
    let a = g.forward(&zeros).unwrap();
    assert!(a.data().iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));
    assert_eq!(a.data(), g.forward(&zeros).unwrap().data());
}

#[test]
fn train_mode_reports_every_bn_layer() {
    let spec = small(Upsampler::SubpixelConv, true);
    let g: Model = build_generator(&spec, 0).unwrap();
    let (_, stats) = g.forward_with(&input(2, 8, 0), Mode::Train).unwrap();
    assert_eq!(stats.len(), spec.bn_layers());
}

#[test]
fn invalid_specs_are_rejected() {
    let bad_scale = GeneratorSpec {
        scale: 3,
        ..GeneratorSpec::default()
    };
    assert!(build_generator::<f32>(&bad_scale, 0).is_err());
    let no_blocks = GeneratorSpec {
        n_res_blocks: 0,
        ..GeneratorSpec::default()
    };
    assert!(build_generator::<f32>(&no_blocks, 0).is_err());
    let json = ModelSpec::Generator(GeneratorSpec::srgan()).to_json();
    assert_eq!(
        ModelSpec::from_json(&json).unwrap(),
        ModelSpec::Generator(GeneratorSpec::srgan())
    );
}
