//! End-to-end runs of the `mmdm` command surface, in process.

use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde_json::Value;

use mmdm::cli::render::{project_positions, RenderOptions, View};
use mmdm::cli::{
    ablation_variants, cmd_ablate, cmd_evaluate, cmd_train, run, RunConfig, Sweep, ARCH_GRID, TABLE_COLUMNS,
};
use mmdm::motion::io::write_motion;
use mmdm::motion::{generate_synthetic_dataset, Archetype, CaptionGrammar, sequence_positions, GeneratorConfig, MotionSequence, RepresentationMode, Skeleton};

const FAST: [&str; 10] = [
    "--preset",
    "micro",
    "--set",
    "model.diffusion_steps=10",
    "--set",
    "train.total_steps=3",
    "--set",
    "evaluator.steps=40",
    "--set",
    "eval.repeats=1",
];

fn mmdm(args: &[&str]) -> i32 {
    run(std::iter::once("mmdm").chain(FAST).chain(args.iter().copied()))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Trains the fast micro model into `dir` and returns its final checkpoint.
fn trained(dir: &Path, seed: &str) -> PathBuf {
    assert_eq!(mmdm(&["--seed", seed, "--out", s(dir), "train"]), 0);
    dir.join("final.mmck")
}

fn fast_config() -> RunConfig {
    let overrides: Vec<String> = FAST.chunks(2).skip(1).map(|kv| kv[1].to_string()).collect();
    RunConfig::load("micro", None, &overrides).unwrap()
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mmdm(&["--config", s(&dir.path().join("missing.toml")), "train"]), 2);
    assert_eq!(mmdm(&["--set", "train.bogus=1", "train"]), 2);
    assert_eq!(mmdm(&["--set", "train.mask_ratio=1.5", "train"]), 2);
    assert_eq!(mmdm(&["frobnicate"]), 2);
    assert_eq!(mmdm(&["render", "--input", "x.mmot", "--format", "png"]), 2);
}

#[test]
fn train_is_reproducible_and_sample_checks_its_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let a = trained(&dir.path().join("a"), "0");
    let b = trained(&dir.path().join("b"), "0");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let log = std::fs::read_to_string(dir.path().join("a/train_log.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);

    let sample = |seed: &str, out: &Path| {
        mmdm(&["--seed", seed, "--out", s(out), "sample", "--checkpoint", s(&a), "--caption", "a person walks forward", "--length", "12"])
    };
    let (x, y, z) = (dir.path().join("x.mmot"), dir.path().join("y.mmot"), dir.path().join("z.mmot"));
    assert_eq!(sample("5", &x), 0);
    assert_eq!(sample("5", &y), 0);
    assert_eq!(sample("6", &z), 0);
    assert_eq!(std::fs::read(&x).unwrap(), std::fs::read(&y).unwrap());
    assert_ne!(std::fs::read(&x).unwrap(), std::fs::read(&z).unwrap());

    let too_long = mmdm(&["--out", s(&x), "sample", "--checkpoint", s(&a), "--caption", "someone crouches", "--length", "500"]);
    assert_eq!(too_long, 2);

    let other = dir.path().join("other.toml");
    std::fs::write(&other, "[model]\nhidden_dim = 16\n").unwrap();
    let mismatch = mmdm(&["--config", s(&other), "--out", s(&x), "sample", "--checkpoint", s(&a), "--caption", "a man jumps"]);
    assert_eq!(mismatch, 2);

    let frames = dir.path().join("frames");
    assert_eq!(mmdm(&["--out", s(&frames), "render", "--input", s(&x), "--size", "64"]), 0);
    assert_eq!(std::fs::read_dir(&frames).unwrap().count(), 12);
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn evaluate_writes_every_metric_family() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trained(&dir.path().join("run"), "1");
    let out = dir.path().join("model.json");
    assert_eq!(mmdm(&["--out", s(&out), "evaluate", "--checkpoint", s(&ckpt), "--label", "Tiny"]), 0);
    let r = report(&out);
    assert_eq!(r["label"], "Tiny");
    for key in ["fid", "r_precision_top1", "r_precision_top2", "r_precision_top3", "mm_dist", "diversity", "multimodality"] {
        assert!(r[key]["mean"].as_f64().unwrap().is_finite(), "{key}");
        assert!(r[key].get("ci95").is_none(), "{key} has an interval with one repeat");
    }

    let real = dir.path().join("real.json");
    assert_eq!(mmdm(&["--out", s(&real), "evaluate", "--real"]), 0);
    let r = report(&real);
    assert!(r["fid"]["mean"].as_f64().unwrap() < 0.05, "{}", r["fid"]);
    assert!(r["multimodality"].is_null());

    let two = dir.path().join("two.json");
    assert_eq!(mmdm(&["--out", s(&two), "evaluate", "--real", "--repeats", "2"]), 0);
    assert!(report(&two)["fid"]["ci95"].as_f64().is_some());
}

#[test]
fn render_counts_frames_and_holds_still_poses() {
    let dir = tempfile::tempdir().unwrap();
    let skel = Skeleton::toy(RepresentationMode::Rotations);
    let mut frames = Array3::zeros((7, skel.joint_count(), 6));
    frames.slice_mut(ndarray::s![.., 0, 4]).fill(0.9);
    let clip = dir.path().join("still.mmot");
    write_motion(&clip, &MotionSequence::new(frames, "a person stands", 20.0).unwrap(), &skel).unwrap();
    let out = dir.path().join("frames");
    assert_eq!(mmdm(&["--out", s(&out), "render", "--input", s(&clip), "--view", "side"]), 0);
    let mut files: Vec<_> = std::fs::read_dir(&out).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert_eq!(files.len(), 7);
    assert!(files[0].ends_with("frame_0000.ppm"));
    let first = std::fs::read(&files[0]).unwrap();
    assert!(first.starts_with(b"P6\n256 256\n255\n"));
    assert!(files.iter().all(|f| std::fs::read(f).unwrap() == first));
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (ma, mb) = (mean(a), mean(b));
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let var = |v: &[f64], m: f64| v.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    cov / (var(a, ma) * var(b, mb)).sqrt()
}

#[test]
fn walking_feet_swing_in_opposite_phase() {
    let cfg = GeneratorConfig { samples_per_archetype: 3, min_len: 40, max_len: 40, ..Default::default() };
    let skel = cfg.skeleton();
    let (pelvis, l_foot, r_foot) = (0, 6, 8);
    let clips = generate_synthetic_dataset(&cfg, 4).unwrap();
    let walks: Vec<_> = clips.iter().filter(|c| CaptionGrammar::classify(c.caption()) == Some(Archetype::Walk)).collect();
    assert_eq!(walks.len(), 3);
    for clip in walks {
        let pixels = project_positions(&sequence_positions(&skel, clip).unwrap(), &RenderOptions { view: View::Side, size: 128 });
        let swing = |foot: usize| pixels.iter().map(|f| f[foot].0 - f[pelvis].0).collect::<Vec<f64>>();
        let (left, right) = (swing(l_foot), swing(r_foot));
        let c = correlation(&left, &right);
        assert!(c < -0.9, "left/right foot correlation {c}");
        let spread = |v: &[f64]| v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread(&left) > 5.0, "foot barely moves on screen: {}", spread(&left));
    }
}

#[test]
fn arch_variants_are_labelled_like_the_tables() {
    let labels: Vec<String> =
        ablation_variants(&fast_config(), Sweep::Arch, &[], &ARCH_GRID).into_iter().map(|v| v.label).collect();
    assert_eq!(labels, ["04 Encoder+2 Decoder", "06 Encoder+2 Decoder", "08 Encoder+4 Decoder", "12 Encoder+4 Decoder"]);
}

#[test]
fn ratio_sweep_through_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(mmdm(&["--out", s(dir.path()), "--set", "eval.samples=32", "ablate", "--sweep", "ratio"]), 0);
    let table: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("ablation_ratio.json")).unwrap()).unwrap();
    let rows = table["rows"].as_array().unwrap();
    let labels: Vec<&str> = rows.iter().map(|r| r["label"].as_str().unwrap()).collect();
    assert_eq!(labels, ["10%", "20%", "30%", "40%"]);
    assert!(rows.iter().all(|r| r["report"].is_object()));
    let md = std::fs::read_to_string(dir.path().join("ablation_ratio.md")).unwrap();
    let header = md.lines().next().unwrap();
    assert!(TABLE_COLUMNS.iter().all(|c| header.contains(c)), "{header}");
    assert_eq!(md.lines().count(), 6);
}

#[test]
fn an_ablation_row_equals_a_separate_train_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let mut base = fast_config();
    base.paths.out = dir.path().join("sweep");
    let variant = ablation_variants(&base, Sweep::Ratio, &[0.3], &[]).remove(0);
    let table = cmd_ablate(&base, Sweep::Ratio, std::slice::from_ref(&variant)).unwrap();

    let mut solo = variant.config.clone();
    solo.paths.out = dir.path().join("solo");
    let trained = cmd_train(&solo, None).unwrap();
    let report = cmd_evaluate(&solo, Some(&trained.checkpoint), &variant.label).unwrap();
    assert_eq!(table.rows[0].report.as_ref(), Some(&report));
}
