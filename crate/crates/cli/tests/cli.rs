use std::path::Path;
use std::process::{Command, Output};

use tilesr_core::data::ImageBuffer;
use tilesr_core::infer::{load_weights, sr_image, SrModel};

fn tilesr(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tilesr"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = tilesr(args, cwd);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&tilesr(&["sr", "--bogus"], dir.path())), 2);
    assert_eq!(code(&tilesr(&["frobnicate"], dir.path())), 2);
    assert_eq!(
        code(&tilesr(
            &["sr", "-m", "nearest", "-i", "a.png", "-o", "b.png", "--roi", "1,2"],
            dir.path()
        )),
        2
    );
    assert_eq!(code(&tilesr(&["--help"], dir.path())), 0);
}

#[test]
fn data_and_model_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["init", "-o", "g.tsrw"], p);
    std::fs::write(p.join("junk.png"), b"not a png").unwrap();
    assert_eq!(
        code(&tilesr(&["sr", "-m", "g.tsrw", "-i", "junk.png", "-o", "o.png"], p)),
        3
    );
    assert_eq!(
        code(&tilesr(&["sr", "-m", "g.tsrw", "-i", "missing.png", "-o", "o.png"], p)),
        3
    );
    std::fs::write(p.join("bad.tsrw"), b"TSRW1 truncated").unwrap();
    ImageBuffer::filled(8, 8, 3, 0.5)
        .unwrap()
        .save_png(&p.join("in.png"))
        .unwrap();
    assert_eq!(
        code(&tilesr(&["sr", "-m", "bad.tsrw", "-i", "in.png", "-o", "o.png"], p)),
        4
    );
    assert_eq!(
        code(&tilesr(&["sr", "-m", "none.tsrw", "-i", "in.png", "-o", "o.png"], p)),
        4
    );
}

#[test]
fn sr_command_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["synth-data", "-o", "data", "--count", "1", "--size", "64"], p);
    ok(&["init", "-o", "g.tsrw", "--seed", "3"], p);
    ok(
        &[
            "sr",
            "-m",
            "g.tsrw",
            "-i",
            "data/sample_00000.png",
            "-o",
            "sr.png",
            "--tile",
            "24",
        ],
        p,
    );
    let lr = ImageBuffer::load_png(&p.join("data/sample_00000.png")).unwrap();
    let model = SrModel::new("g", load_weights(&p.join("g.tsrw")).unwrap()).unwrap();
    let expected = sr_image(&model, &lr, 24).unwrap().encode_png().unwrap();
    assert!(std::fs::read(p.join("sr.png")).unwrap() == expected);

    let line = ok(
        &[
            "sr",
            "-m",
            "nearest",
            "-i",
            "data/sample_00000.png",
            "-o",
            "n.png",
            "--reference",
            "n.png",
        ],
        p,
    );
    // The reference is read after the output is written, so it compares with itself.
    let report: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(report["psnr"], "inf");
}

#[test]
fn synth_data_writes_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        &[
            "synth-data",
            "-o",
            "d",
            "--count",
            "3",
            "--size",
            "64",
            "--seed",
            "5",
            "--stains",
        ],
        p,
    );
    let manifest = std::fs::read_to_string(p.join("d/manifest.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = manifest.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    for l in &lines {
        let channels = l["channels"].as_array().unwrap();
        assert!((1..=4).contains(&channels.len()));
        for c in channels {
            assert!(p.join("d").join(c.as_str().unwrap()).exists());
        }
    }
    // Same seed, same bytes.
    ok(
        &["synth-data", "-o", "e", "--count", "3", "--size", "64", "--seed", "5"],
        p,
    );
    for i in 0..3 {
        let name = format!("sample_{i:05}.png");
        assert_eq!(
            std::fs::read(p.join("d").join(&name)).unwrap(),
            std::fs::read(p.join("e").join(&name)).unwrap()
        );
    }
}

#[test]
fn train_writes_logs_and_weights() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let stdout = ok(
        &[
            "train",
            "-o",
            "run",
            "--synthetic",
            "6",
            "--validation",
            "2",
            "--iterations",
            "4",
            "--pretrain",
            "2",
            "--epoch-iterations",
            "2",
            "--batch",
            "2",
            "--hr-tile",
            "64",
            "--log-every",
            "0",
        ],
        p,
    );
    assert!(stdout.contains("nearest_baseline"));
    let metrics = std::fs::read_to_string(p.join("run/metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 4);
    let first: serde_json::Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    for key in ["iteration", "lr", "d_loss", "g_adv", "g_content", "g_pixel", "wall_ms"] {
        assert!(first.get(key).is_some(), "missing {key}");
    }
    assert_eq!(
        std::fs::read_to_string(p.join("run/validation.jsonl"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    assert!(p.join("run/checkpoints/generator_epoch0002.tsrw").exists());
    load_weights(&p.join("run/generator.tsrw")).unwrap();

    // The config file supplies values the flags leave unset.
    std::fs::write(
        p.join("c.toml"),
        "[train]\nsynthetic = 4\nvalidation = 1\n[train.plan]\nbatch_size = 1\nhr_tile = 64\n",
    )
    .unwrap();
    ok(
        &[
            "--config",
            "c.toml",
            "train",
            "-o",
            "run2",
            "--iterations",
            "2",
            "--epoch-iterations",
            "2",
            "--log-every",
            "0",
        ],
        p,
    );
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(p.join("run2/resolved.json")).unwrap()).unwrap();
    assert_eq!(resolved["plan"]["batch_size"], 1);
    std::fs::write(p.join("bad.toml"), "[train.plan]\nbatch_size = \"many\"\n").unwrap();
    assert_eq!(code(&tilesr(&["--config", "bad.toml", "train", "-o", "x"], p)), 2);
}

#[test]
fn eval_and_video_roi() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(&["synth-data", "-o", "frames", "--count", "3", "--size", "64"], p);
    let out = ok(
        &[
            "video-roi",
            "-m",
            "bicubic",
            "--frames",
            "frames",
            "--roi",
            "4,4,16,16",
            "-o",
            "v",
        ],
        p,
    );
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["frames"], 3);
    let frame = ImageBuffer::load_png(&p.join("v/frame_00002.png")).unwrap();
    assert_eq!((frame.width(), frame.height()), (64, 64));
    assert_eq!(
        code(&tilesr(
            &[
                "video-roi",
                "-m",
                "bicubic",
                "--frames",
                "frames",
                "--roi",
                "60,4,16,16",
                "-o",
                "w"
            ],
            p
        )),
        2
    );

    let out = ok(&["eval", "--sr", "frames", "--hr", "frames"], p);
    let lines: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[3]["label"], "mean");
    assert!(lines.iter().all(|l| l["psnr"] == "inf"));
}

#[test]
fn bench_emits_records_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let out = tilesr(
        &[
            "bench", "patch", "-m", "nearest", "-m", "bicubic", "--runs", "10", "--warmup", "1", "--tile", "16",
        ],
        p,
    );
    assert_eq!(code(&out), 0);
    let records: Vec<serde_json::Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["protocol"], "patch");
    assert_eq!(records[1]["label"], "bicubic");
    assert_eq!(records[0]["n_runs"], 10);
    let table = String::from_utf8(out.stderr).unwrap();
    assert!(table.contains("patch time (s)") && table.contains("video fps"));
    assert_eq!(code(&tilesr(&["bench", "patch", "-m", "nearest", "--runs", "3"], p)), 2);
}
