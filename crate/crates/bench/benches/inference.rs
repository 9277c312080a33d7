use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use tilesr_bench::{all_upscalers, drifting_frames, lr_image};
use tilesr_core::infer::{sr_image, sr_video_roi, Roi};

const PATCH: usize = 32;
const IMAGE: usize = 96;
const TILE: usize = 32;

fn patch(c: &mut Criterion) {
    let ups = all_upscalers(0).unwrap();
    let lr = lr_image(PATCH, 1).unwrap();
    let mut g = c.benchmark_group("patch");
    for up in &ups {
        g.bench_function(BenchmarkId::from_parameter(up.label()), |b| {
            b.iter(|| up.upscale(&lr).unwrap())
        });
    }
    g.finish();
}

fn whole_image(c: &mut Criterion) {
    let ups = all_upscalers(0).unwrap();
    let lr = lr_image(IMAGE, 2).unwrap();
    let mut g = c.benchmark_group("image");
    g.sample_size(10);
    for up in &ups {
        g.bench_function(BenchmarkId::from_parameter(up.label()), |b| {
            b.iter(|| sr_image(up.as_ref(), &lr, TILE).unwrap())
        });
    }
    g.finish();
}

fn video(c: &mut Criterion) {
    let ups = all_upscalers(0).unwrap();
    let frames = drifting_frames(IMAGE, 30, 3).unwrap();
    let roi = Roi::new(16, 16, PATCH, PATCH);
    let mut g = c.benchmark_group("video_roi");
    g.sample_size(10);
    g.throughput(Throughput::Elements(frames.len() as u64));
    for up in &ups {
        g.bench_function(BenchmarkId::from_parameter(up.label()), |b| {
            b.iter(|| sr_video_roi(up.as_ref(), &frames, roi, |_| Ok(())).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, patch, whole_image, video);
criterion_main!(benches);
