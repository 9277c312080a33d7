use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tilesr_core::bench::{self, BenchOptions, BenchResult};
use tilesr_core::data::{
    bicubic_downsample, load_atlas_sample, read_manifest, synthesize_stains, ImageBuffer, ManifestEntry,
};
use tilesr_core::infer::{
    ensure_rgb, load_frames, save_weights, sr_image, sr_video_roi, Interpolation, InterpolationUpscaler, Roi, SrModel,
    Upscaler,
};
use tilesr_core::models::{DiscriminatorSpec, GeneratorSpec, Model, ModelSpec, Upsampler};
use tilesr_core::train::{nearest_baseline, run_training, IterationLog, PairDataset, TrainOptions};
use tilesr_core::{QualityReport, TrainPlan};

use crate::config::{overlay, Config, Profile};
use crate::error::CliError;
use crate::server::{self, Registry};

#[derive(Debug, Parser)]
#[command(name = "tilesr", version, about = "Tiled single-image super-resolution")]
pub struct Cli {
    /// TOML configuration; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a generator/discriminator pair.
    Train(TrainArgs),
    /// Write synthetic confocal-style images.
    SynthData(SynthArgs),
    /// Upscale one image.
    Sr(SrArgs),
    /// Upscale a region of interest in every frame of a PNG sequence.
    VideoRoi(VideoArgs),
    /// Measure latency and frame rate.
    Bench(BenchArgs),
    /// Run the HTTP/WebSocket service.
    Serve(ServeArgs),
    /// Quality metrics of SR images against references.
    Eval(EvalArgs),
    /// Write an untrained generator weight file.
    Init(InitArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory of RGB PNGs or a `.jsonl` channel manifest. Synthetic data
    /// is used when absent.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Network widths and schedule preset (default desk).
    #[arg(long, value_enum)]
    pub profile: Option<Profile>,
    /// Number of synthetic training images.
    #[arg(long)]
    pub synthetic: Option<usize>,
    /// Number of held-out validation images.
    #[arg(long)]
    pub validation: Option<usize>,
    /// Output directory for logs, checkpoints and weights.
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    /// Total iterations, pretraining included.
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Pixel and content loss only iterations before the adversarial phase.
    #[arg(long)]
    pub pretrain: Option<usize>,
    /// Iterations between checkpoints.
    #[arg(long)]
    pub epoch_iterations: Option<usize>,
    /// Tiles per batch.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Learning rate of the first half.
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning rate of the second half.
    #[arg(long)]
    pub lr2: Option<f64>,
    /// Training seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// HR tile side; the LR tile is a quarter of it.
    #[arg(long)]
    pub hr_tile: Option<usize>,
    /// Generator upsampling path.
    #[arg(long)]
    pub upsampler: Option<Upsampler>,
    /// Batch norm in the generator.
    #[arg(long)]
    pub bn: Option<bool>,
    /// Hard 1/0 discriminator targets.
    #[arg(long)]
    pub no_smoothing: bool,
    /// Print a progress line every N iterations (0 = quiet).
    #[arg(long, default_value_t = 50)]
    pub log_every: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Number of images.
    #[arg(long, default_value_t = 16)]
    pub count: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    /// Base seed; image i draws from stream i of it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write one grayscale PNG per stain and a `manifest.jsonl`.
    #[arg(long)]
    pub stains: bool,
}

#[derive(Debug, Args)]
pub struct SrArgs {
    /// Weight file, or `nearest` / `bicubic`.
    #[arg(long, short)]
    pub model: String,
    /// Input PNG.
    #[arg(long, short)]
    pub input: PathBuf,
    /// Output PNG.
    #[arg(long, short)]
    pub output: PathBuf,
    /// Crop `x,y,w,h` before upscaling.
    #[arg(long)]
    pub roi: Option<Roi>,
    /// Tile size; 0 upscales the image in one pass.
    #[arg(long, default_value_t = 64)]
    pub tile: usize,
    /// HR reference; prints a quality report.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VideoArgs {
    /// Weight file, or `nearest` / `bicubic`.
    #[arg(long, short)]
    pub model: String,
    /// Directory of numbered PNG frames.
    #[arg(long)]
    pub frames: PathBuf,
    /// Crop `x,y,w,h` applied to every frame.
    #[arg(long)]
    pub roi: Roi,
    /// Output directory for the upscaled frames.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Write the frame with the SR crop beside it instead of the crop alone.
    #[arg(long)]
    pub composite: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BenchKind {
    Patch,
    Image,
    Video,
    All,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Protocol to measure; `all` runs every one.
    #[arg(value_enum)]
    pub kind: BenchKind,
    /// Weight file or `nearest` / `bicubic`; repeatable. Defaults to
    /// untrained desk-profile SRGAN and modified generators.
    #[arg(long = "model", short)]
    pub models: Vec<String>,
    /// Add nearest and bicubic interpolation rows.
    #[arg(long)]
    pub baselines: bool,
    /// Timed runs per model (at least 10).
    #[arg(long)]
    pub runs: Option<usize>,
    /// Untimed runs before timing.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Worker threads for inference.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Tile size for the whole-image protocol.
    #[arg(long)]
    pub tile: Option<usize>,
    /// ROI for the video protocol.
    #[arg(long, default_value = "32,32,64,64")]
    pub roi: Roi,
    /// Frame directory for the video protocol; 30 synthetic frames if absent.
    #[arg(long)]
    pub frames: Option<PathBuf>,
    /// LR input for patch/image protocols; synthetic if absent.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Repeat the whole measurement this many times.
    #[arg(long, default_value_t = 1)]
    pub sessions: usize,
    /// Also measure throughput with this many concurrent requests.
    #[arg(long)]
    pub concurrent: Option<usize>,
    /// Append JSON lines here instead of stdout.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Directory of `.tsrw` generators.
    #[arg(long)]
    pub models: Option<PathBuf>,
    /// Listen address.
    #[arg(long)]
    pub addr: Option<std::net::SocketAddr>,
    /// Request body limit.
    #[arg(long)]
    pub max_body_bytes: Option<usize>,
    /// Inputs with a longer side are tiled instead of upscaled in one pass.
    #[arg(long)]
    pub max_patch: Option<usize>,
    /// Tile size used for large inputs.
    #[arg(long)]
    pub tile: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// SR image or directory.
    #[arg(long)]
    pub sr: PathBuf,
    /// Reference image or directory; files pair by name.
    #[arg(long)]
    pub hr: PathBuf,
    /// Phase period of the checkerboard index.
    #[arg(long, default_value_t = 4)]
    pub period: usize,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    /// Output weight file.
    #[arg(long, short)]
    pub out: PathBuf,
    /// Network width preset.
    #[arg(long, value_enum, default_value = "desk")]
    pub profile: Profile,
    /// Generator upsampling path.
    #[arg(long, default_value = "nearest_then_conv")]
    pub upsampler: Upsampler,
    /// Batch norm in the generator.
    #[arg(long, default_value_t = false)]
    pub bn: bool,
    /// Initialization seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = Config::load(cli.config.as_deref()).map_err(CliError::usage)?;
    match cli.command {
        Command::Train(a) => train(a, &config),
        Command::SynthData(a) => synth_data(a),
        Command::Sr(a) => sr(a),
        Command::VideoRoi(a) => video_roi(a),
        Command::Bench(a) => bench_cmd(a, &config),
        Command::Serve(a) => serve(a, &config),
        Command::Eval(a) => eval(a),
        Command::Init(a) => init(a),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(CliError::data)
}

fn create_file(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(CliError::data)
}

/// A weight file, or one of the interpolation baselines.
pub fn load_upscaler(spec: &str) -> Result<Box<dyn Upscaler>, CliError> {
    match spec {
        "nearest" => Ok(Box::new(InterpolationUpscaler {
            kind: Interpolation::Nearest,
            scale: 4,
        })),
        "bicubic" => Ok(Box::new(InterpolationUpscaler {
            kind: Interpolation::Bicubic,
            scale: 4,
        })),
        path => Ok(Box::new(
            SrModel::load(Path::new(path)).map_err(|e| CliError::model(e.into()))?,
        )),
    }
}

fn load_rgb(path: &Path) -> Result<ImageBuffer, CliError> {
    Ok(ensure_rgb(ImageBuffer::load_png(path)?)?)
}

fn training_data(
    args: &TrainArgs,
    cfg: &Config,
    plan: &TrainPlan,
    scale: usize,
) -> Result<(PairDataset, PairDataset), CliError> {
    let data = args.data.clone().or_else(|| cfg.train.data.clone());
    let n_val = args.validation.or(cfg.train.validation).unwrap_or(32);
    match data {
        None => {
            let n = args.synthetic.or(cfg.train.synthetic).unwrap_or(256);
            let train = PairDataset::synthetic(plan.seed, n, plan.hr_tile, scale)?;
            let val = PairDataset::synthetic(plan.seed.wrapping_add(1), n_val.max(1), plan.hr_tile, scale)?;
            Ok((train, val))
        }
        Some(path) => {
            let images = if path.extension().is_some_and(|e| e == "jsonl") {
                read_manifest(&path)?
                    .iter()
                    .map(|ManifestEntry { channels, .. }| load_atlas_sample(channels, channels.len().min(4)))
                    .collect::<tilesr_core::Result<Vec<_>>>()?
            } else {
                let mut paths: Vec<PathBuf> = fs::read_dir(&path)
                    .with_context(|| format!("listing {}", path.display()))
                    .map_err(CliError::data)?
                    .filter_map(|e| e.ok().map(|e| e.path()))
                    .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
                    .collect();
                paths.sort();
                paths.iter().map(|p| load_rgb(p)).collect::<Result<Vec<_>, _>>()?
            };
            if images.len() < 2 {
                return Err(CliError::data(anyhow::anyhow!(
                    "need at least 2 images in {}",
                    path.display()
                )));
            }
            let n_val = n_val.clamp(1, images.len() - 1);
            let (train, val) = images.split_at(images.len() - n_val);
            Ok((
                PairDataset::from_images(train, plan.hr_tile, scale)?,
                PairDataset::from_images(val, plan.hr_tile, scale)?,
            ))
        }
    }
}

fn train(args: TrainArgs, cfg: &Config) -> Result<(), CliError> {
    let profile = args.profile.unwrap_or(cfg.train.profile);
    let mut plan = overlay(&profile.plan(), &cfg.train.plan).map_err(CliError::usage)?;
    let mut gspec = overlay(
        &profile.generator(Upsampler::NearestThenConv, false),
        &cfg.train.generator,
    )
    .map_err(CliError::usage)?;
    let dspec: DiscriminatorSpec =
        overlay(&profile.discriminator(), &cfg.train.discriminator).map_err(CliError::usage)?;
    if let Some(v) = args.iterations {
        plan.total_iterations = v;
        if args.pretrain.is_none() {
            plan.pretrain_iterations = plan.pretrain_iterations.min(v / 4);
        }
    }
    if let Some(v) = args.pretrain {
        plan.pretrain_iterations = v;
    }
    if let Some(v) = args.epoch_iterations {
        plan.iterations_per_epoch = v;
    }
    plan.iterations_per_epoch = plan.iterations_per_epoch.min(plan.total_iterations.max(1));
    if let Some(v) = args.batch {
        plan.batch_size = v;
    }
    if let Some(v) = args.lr {
        plan.lr_first_half = v;
    }
    if let Some(v) = args.lr2 {
        plan.lr_second_half = v;
    }
    if let Some(v) = args.seed {
        plan.seed = v;
    }
    if let Some(v) = args.hr_tile {
        plan.hr_tile = v;
    }
    if args.no_smoothing {
        plan.label_smoothing = tilesr_core::train::LabelSmoothing::off();
    }
    if let Some(u) = args.upsampler {
        gspec.upsampler = u;
    }
    if let Some(bn) = args.bn {
        gspec.use_bn = bn;
    }
    plan.validate()?;

    let out = args
        .out
        .clone()
        .or_else(|| cfg.train.out.clone())
        .unwrap_or_else(|| PathBuf::from("run"));
    create_dir(&out)?;
    let (train_set, val_set) = training_data(&args, cfg, &plan, gspec.scale)?;
    eprintln!(
        "training {} on {} pairs ({} held out), {} iterations",
        ModelSpec::Generator(gspec.clone()).summary(),
        train_set.len(),
        val_set.len(),
        plan.total_iterations
    );
    let resolved = serde_json::json!({
        "plan": &plan, "generator": &gspec, "discriminator": &dspec
    });
    fs::write(
        out.join("resolved.json"),
        serde_json::to_string_pretty(&resolved).expect("serializes"),
    )
    .context("writing resolved.json")
    .map_err(CliError::data)?;

    let baseline = nearest_baseline(&val_set, gspec.scale)?;
    fs::write(
        out.join("baseline.json"),
        serde_json::to_string(&baseline).expect("serializes"),
    )
    .context("writing baseline.json")
    .map_err(CliError::data)?;

    let mut gen: Model = Model::build(&ModelSpec::Generator(gspec), plan.seed)?;
    let mut disc: Model = Model::build(&ModelSpec::Discriminator(dspec), plan.seed.wrapping_add(1))?;
    let mut metrics = create_file(&out.join("metrics.jsonl"))?;
    let mut validation = create_file(&out.join("validation.jsonl"))?;
    let every = args.log_every;
    let mut progress = |l: &IterationLog| {
        if every > 0 && l.iteration.is_multiple_of(every) {
            eprintln!(
                "it {:>6}  lr {:.1e}  pixel {:.5}  content {:.5}  d {:.4}  adv {:.4}  {:.0} ms",
                l.iteration, l.lr, l.g_pixel, l.g_content, l.d_loss, l.g_adv, l.wall_ms
            );
        }
    };
    let report = run_training(
        &mut gen,
        &mut disc,
        &plan,
        &train_set,
        TrainOptions {
            validation: Some(&val_set),
            checkpoint_dir: Some(out.join("checkpoints")),
            metric_log: Some(&mut metrics),
            validation_log: Some(&mut validation),
            on_iteration: Some(&mut progress),
            ..Default::default()
        },
    )?;
    metrics.flush().map_err(|e| CliError::data(e.into()))?;
    validation.flush().map_err(|e| CliError::data(e.into()))?;
    save_weights(&gen, &out.join("generator.tsrw"))?;
    save_weights(&disc, &out.join("discriminator.tsrw"))?;
    println!("{}", serde_json::json!({ "nearest_baseline": baseline }));
    if let Some(last) = report.validations.last() {
        println!("{}", serde_json::json!({ "final": last }));
    }
    Ok(())
}

fn synth_data(args: SynthArgs) -> Result<(), CliError> {
    create_dir(&args.out)?;
    let mut manifest = if args.stains {
        Some(create_file(&args.out.join("manifest.jsonl"))?)
    } else {
        None
    };
    for i in 0..args.count {
        let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
        rng.set_stream(i as u64);
        let sample = synthesize_stains(&mut rng, args.size)?;
        let id = format!("sample_{i:05}");
        sample.rgb.save_png(&args.out.join(format!("{id}.png")))?;
        if let Some(m) = manifest.as_mut() {
            let mut channels = Vec::new();
            for (c, role) in sample.scheme.roles().iter().enumerate() {
                let name = format!(
                    "{id}_{}.png",
                    serde_json::to_value(role).expect("role").as_str().expect("str")
                );
                let plane = ImageBuffer::new(
                    args.size,
                    args.size,
                    vec![tilesr_core::data::ChannelRole::Gray],
                    sample.stains.plane(c),
                )?;
                plane.save_png(&args.out.join(&name))?;
                channels.push(PathBuf::from(name));
            }
            let line = serde_json::to_string(&ManifestEntry { id, channels }).expect("entry serializes");
            writeln!(m, "{line}").map_err(|e| CliError::data(e.into()))?;
        }
    }
    if let Some(mut m) = manifest {
        m.flush().map_err(|e| CliError::data(e.into()))?;
    }
    eprintln!("wrote {} images to {}", args.count, args.out.display());
    Ok(())
}

fn sr(args: SrArgs) -> Result<(), CliError> {
    let up = load_upscaler(&args.model)?;
    let mut img = load_rgb(&args.input)?;
    if let Some(roi) = args.roi {
        img = roi.crop(&img)?;
    }
    let start = std::time::Instant::now();
    let out = if args.tile == 0 {
        up.upscale(&img)?
    } else {
        sr_image(up.as_ref(), &img, args.tile)?
    };
    let ms = start.elapsed().as_secs_f64() * 1e3;
    out.save_png(&args.output)?;
    if let Some(reference) = &args.reference {
        let hr = load_rgb(reference)?;
        let mut report = QualityReport::evaluate(&out.quantized(), &hr, up.scale())?.with_label(up.label());
        report.infer_ms = Some(ms);
        println!("{}", report.to_json_line());
    } else {
        eprintln!(
            "{}x{} -> {}x{} in {ms:.1} ms",
            img.width(),
            img.height(),
            out.width(),
            out.height()
        );
    }
    Ok(())
}

fn video_roi(args: VideoArgs) -> Result<(), CliError> {
    let up = load_upscaler(&args.model)?;
    let frames = load_frames(&args.frames)?;
    create_dir(&args.out)?;
    let mut total = 0.0;
    let mut count = 0usize;
    sr_video_roi(up.as_ref(), &frames, args.roi, |f| {
        let img = if args.composite { &f.composite } else { &f.sr };
        img.save_png(&args.out.join(format!("frame_{:05}.png", f.index)))?;
        total += f.elapsed.as_secs_f64();
        count += 1;
        Ok(())
    })?;
    println!(
        "{}",
        serde_json::json!({ "label": up.label(), "frames": count, "fps": count as f64 / total })
    );
    Ok(())
}

/// Untrained desk-scale SRGAN (subpixel + BN) and modified (nearest + no BN)
/// generators.
fn default_bench_models() -> Result<Vec<Box<dyn Upscaler>>, CliError> {
    let mut out: Vec<Box<dyn Upscaler>> = Vec::new();
    for (id, up, bn) in [
        ("srgan", Upsampler::SubpixelConv, true),
        ("srgan_no_bn", Upsampler::SubpixelConv, false),
        ("modified", Upsampler::NearestThenConv, false),
    ] {
        let model = Model::build(&ModelSpec::Generator(GeneratorSpec::desk(up, bn)), 0)?;
        out.push(Box::new(SrModel::new(id, model)?));
    }
    Ok(out)
}

/// Deterministic synthetic LR image of side `lr_size`.
pub fn synthetic_lr(lr_size: usize, seed: u64) -> Result<ImageBuffer, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hr = synthesize_stains(&mut rng, (lr_size * 4).max(64))?.rgb;
    let lr = bicubic_downsample(&hr, 4)?;
    Ok(lr.crop(0, 0, lr_size, lr_size)?)
}

fn bench_cmd(args: BenchArgs, cfg: &Config) -> Result<(), CliError> {
    let opts = BenchOptions {
        runs: args.runs.unwrap_or(cfg.bench.runs),
        warmup: args.warmup.unwrap_or(cfg.bench.warmup),
        threads: args.threads.unwrap_or(cfg.bench.threads),
    };
    let tile = args.tile.unwrap_or(cfg.bench.tile);
    let mut ups: Vec<Box<dyn Upscaler>> = if args.models.is_empty() {
        default_bench_models()?
    } else {
        args.models.iter().map(|m| load_upscaler(m)).collect::<Result<_, _>>()?
    };
    if args.baselines {
        ups.push(load_upscaler("nearest")?);
        ups.push(load_upscaler("bicubic")?);
    }
    let (patch, image) = match &args.input {
        Some(p) => {
            let img = load_rgb(p)?;
            let patch = img.crop(0, 0, img.width().min(tile), img.height().min(tile))?;
            (patch, img)
        }
        None => (synthetic_lr(tile, 1)?, synthetic_lr(2 * tile, 2)?),
    };
    let frames = match (&args.frames, args.kind) {
        (Some(dir), BenchKind::Video | BenchKind::All) => load_frames(dir)?
            .into_iter()
            .map(ensure_rgb)
            .collect::<tilesr_core::Result<Vec<_>>>()?,
        (None, BenchKind::Video | BenchKind::All) => synthetic_frames(args.roi, 30)?,
        _ => Vec::new(),
    };

    let mut sink: Box<dyn Write> = match &args.jsonl {
        Some(p) => Box::new(
            fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(p)
                .with_context(|| format!("opening {}", p.display()))
                .map_err(CliError::data)?,
        ),
        None => Box::new(std::io::stdout()),
    };
    for session in 0..args.sessions {
        let mut results: Vec<BenchResult> = Vec::new();
        for up in &ups {
            let up = up.as_ref();
            if matches!(args.kind, BenchKind::Patch | BenchKind::All) {
                results.push(bench::time_patch(up, &patch, opts)?);
            }
            if matches!(args.kind, BenchKind::Image | BenchKind::All) {
                results.push(bench::time_whole_image(up, &image, tile, opts)?.0);
            }
            if matches!(args.kind, BenchKind::Video | BenchKind::All) {
                results.push(bench::video_fps(up, &frames, args.roi, opts)?);
            }
            if let Some(threads) = args.concurrent {
                results.push(bench::concurrent_throughput(
                    up,
                    &patch,
                    BenchOptions { threads, ..opts },
                )?);
            }
        }
        for r in &results {
            writeln!(sink, "{}", r.to_json_line()).map_err(|e| CliError::data(e.into()))?;
        }
        eprintln!("session {}/{}", session + 1, args.sessions);
        eprint!("{}", bench::format_table(&results));
    }
    Ok(())
}

/// Frames whose content drifts by one pixel per frame.
fn synthetic_frames(roi: Roi, n: usize) -> Result<Vec<ImageBuffer>, CliError> {
    let side = (roi.x + roi.w).max(roi.y + roi.h) + n;
    let big = synthetic_lr(side.max(16), 3)?;
    let (w, h) = (big.width() - n, big.height() - n);
    (0..n).map(|i| Ok(big.crop(i, i, w, h)?)).collect()
}

fn serve(args: ServeArgs, cfg: &Config) -> Result<(), CliError> {
    let mut sc = cfg.serve.clone();
    if let Some(v) = args.models {
        sc.models = v;
    }
    if let Some(v) = args.addr {
        sc.addr = v;
    }
    if let Some(v) = args.max_body_bytes {
        sc.max_body_bytes = v;
    }
    if let Some(v) = args.max_patch {
        sc.max_patch = v;
    }
    if let Some(v) = args.tile {
        sc.tile = v;
    }
    let registry = Registry::load_dir(&sc.models).map_err(CliError::model)?;
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::other(e.into()))?;
    rt.block_on(server::serve(sc, registry)).map_err(CliError::other)
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let pairs: Vec<(String, PathBuf, PathBuf)> = if args.sr.is_dir() {
        let mut names: Vec<String> = fs::read_dir(&args.sr)
            .with_context(|| format!("listing {}", args.sr.display()))
            .map_err(CliError::data)?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.to_ascii_lowercase().ends_with(".png"))
            .collect();
        names.sort();
        names
            .into_iter()
            .filter(|n| args.hr.join(n).exists())
            .map(|n| (n.clone(), args.sr.join(&n), args.hr.join(&n)))
            .collect()
    } else {
        let name = args
            .sr
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        vec![(name, args.sr.clone(), args.hr.clone())]
    };
    if pairs.is_empty() {
        bail_data("no SR/HR pairs with matching names")?;
    }
    let (mut p, mut s, mut c) = (0.0, 0.0, 0.0);
    for (name, sr_path, hr_path) in &pairs {
        let r = QualityReport::evaluate(&load_rgb(sr_path)?, &load_rgb(hr_path)?, args.period)?.with_label(name);
        println!("{}", r.to_json_line());
        p += r.psnr;
        s += r.ssim;
        c += r.checkerboard_index;
    }
    if pairs.len() > 1 {
        let n = pairs.len() as f64;
        let mean = QualityReport {
            label: Some("mean".into()),
            psnr: p / n,
            ssim: s / n,
            checkerboard_index: c / n,
            infer_ms: None,
        };
        println!("{}", mean.to_json_line());
    }
    Ok(())
}

fn bail_data(msg: &str) -> Result<(), CliError> {
    Err(CliError::data(anyhow::anyhow!("{msg}")))
}

fn init(args: InitArgs) -> Result<(), CliError> {
    let spec = args.profile.generator(args.upsampler, args.bn);
    let model: Model = Model::build(&ModelSpec::Generator(spec), args.seed)?;
    save_weights(&model, &args.out)?;
    eprintln!(
        "{} ({} parameters) -> {}",
        model.spec().summary(),
        model.parameter_count(),
        args.out.display()
    );
    Ok(())
}
