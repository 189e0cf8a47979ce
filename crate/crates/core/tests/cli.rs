//! End-to-end runs of the `lfsafa` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lfsafa::adapt::AdaptFlags;
use lfsafa::train::load_adaptation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn lfsafa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfsafa")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = lfsafa(args);
    assert!(
        out.status.success(),
        "lfsafa {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fails_with(code: i32, args: &[&str]) -> String {
    let out = lfsafa(args);
    assert_eq!(out.status.code(), Some(code), "lfsafa {args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pixels(path: &Path) -> Vec<u8> {
    image::open(path).unwrap().to_rgb8().into_raw()
}

/// A 3x3 RGB macro-pixel image with 12x10 views.
fn macro_fixture(dir: &Path) -> (PathBuf, image::RgbImage) {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let img = image::RgbImage::from_fn(30, 36, |_, _| image::Rgb([rng.random(), rng.random(), rng.random()]));
    let path = dir.join("macro.png");
    img.save(&path).unwrap();
    (path, img)
}

#[test]
fn decode_splits_and_encode_restores() {
    let tmp = tempfile::tempdir().unwrap();
    let (src, img) = macro_fixture(tmp.path());
    let views = tmp.path().join("views");
    ok(&["decode", s(&src), "--angular", "3", "--out", s(&views)]);
    for u in 0..3 {
        for v in 0..3 {
            let view = image::open(views.join(format!("view_{u}_{v}.png"))).unwrap().to_rgb8();
            assert_eq!(view.dimensions(), (10, 12));
            for (x, y, p) in view.enumerate_pixels() {
                assert_eq!(p, img.get_pixel(x * 3 + v, y * 3 + u));
            }
        }
    }
    assert!(views.join("manifest.json").is_file());
    assert!(views.join("config.json").is_file());

    let back = tmp.path().join("back.png");
    ok(&["encode", s(&views), "--out", s(&back)]);
    assert_eq!(pixels(&back), img.into_raw());
    assert!(tmp.path().join("back.png.manifest.json").is_file());
}

#[test]
fn bad_divisor_is_a_usage_error_naming_the_size() {
    let tmp = tempfile::tempdir().unwrap();
    let (src, _) = macro_fixture(tmp.path());
    let err = fails_with(2, &["decode", s(&src), "--angular", "4", "--out", s(&tmp.path().join("v"))]);
    assert!(err.contains("36x30") && err.contains('4'), "{err}");
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let (src, _) = macro_fixture(tmp.path());
    let views = tmp.path().join("views");
    ok(&["decode", s(&src), "--angular", "3", "--out", s(&views)]);
    let err = fails_with(2, &["decode", s(&src), "--angular", "3", "--out", s(&views)]);
    assert!(err.contains("--force"), "{err}");
    ok(&["decode", s(&src), "--angular", "3", "--out", s(&views), "--force"]);

    let png = tmp.path().join("m.png");
    ok(&["encode", s(&views), "--out", s(&png)]);
    fails_with(2, &["encode", s(&views), "--out", s(&png)]);
    ok(&["encode", s(&views), "--out", s(&png), "--force"]);
}

#[test]
fn missing_files_are_runtime_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.lfsa");
    fails_with(
        1,
        &["sr", "--backbone", s(&missing), "--in", s(tmp.path()), "--out", s(&tmp.path().join("o"))],
    );
}

#[test]
fn adaptation_needs_a_backbone() {
    let tmp = tempfile::tempdir().unwrap();
    let err = fails_with(2, &["train", "--phase", "adapt", "--out", s(&tmp.path().join("o"))]);
    assert!(err.contains("--backbone"), "{err}");
}

const TINY: [&str; 10] = ["--synth", "3", "--size", "24", "--patch", "8", "--batch", "2", "--sas-width", "3"];

const ONE_STEP: [&str; 4] = ["--epochs", "1", "--batches-per-epoch", "1"];

/// Trains a 4-wide backbone in a few steps and returns its checkpoint.
fn tiny_backbone(root: &Path) -> PathBuf {
    let out = root.join("bb");
    let mut args = vec!["train", "--phase", "backbone", "--width", "4", "--blocks", "1", "--epochs", "1"];
    args.extend(["--batches-per-epoch", "2", "--out", s(&out)]);
    args.extend(TINY);
    ok(&args);
    out.join("backbone.lfsa")
}

/// `extra` must set `--epochs` and `--batches-per-epoch`.
fn tiny_adapt(root: &Path, backbone: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let out = root.join(name);
    let mut args = vec!["train", "--phase", "adapt", "--angular", "2", "--backbone", s(backbone), "--out", s(&out)];
    args.extend(TINY);
    args.extend(extra);
    ok(&args);
    out.join("adapt.lfsa")
}

#[test]
fn training_artifacts_record_the_variant() {
    let tmp = tempfile::tempdir().unwrap();
    let bb = tiny_backbone(tmp.path());
    assert!(tmp.path().join("bb/train_log.jsonl").is_file());
    let full = tiny_adapt(tmp.path(), &bb, "full", &ONE_STEP);
    let no_diff = tiny_adapt(tmp.path(), &bb, "nodiff", &["--ablation", "no-diff", "--epochs", "1", "--batches-per-epoch", "1"]);
    let (_, full_meta) = load_adaptation(&full, Some(2)).unwrap();
    let (_, nd_meta) = load_adaptation(&no_diff, Some(2)).unwrap();
    let (fc, nc) = (full_meta.adapt.unwrap(), nd_meta.adapt.unwrap());
    assert_eq!(fc.flags, AdaptFlags::default());
    assert!(!nc.flags.use_difference);
    assert_eq!((fc.entry_width(), nc.entry_width()), (8, 4));
    let entry = |m: &lfsafa::train::Metadata| m.tensors.iter().find(|t| t.name.contains("entry")).unwrap().shape.clone();
    assert_eq!(entry(&full_meta), vec![3, 8, 3, 3]);
    assert_eq!(entry(&nd_meta), vec![3, 4, 3, 3]);

    let err = fails_with(2, &["train", "--phase", "backbone", "--backbone", s(&bb), "--out", s(&tmp.path().join("x"))]);
    assert!(err.contains("--backbone"), "{err}");
}

fn hash(path: &Path) -> String {
    format!("{:x}", Sha256::digest(std::fs::read(path).unwrap()))
}

#[test]
fn fresh_adaptation_leaves_outputs_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let bb = tiny_backbone(root);
    let fresh = tiny_adapt(root, &bb, "fresh", &["--epochs", "0", "--batches-per-epoch", "1"]);
    let trained = tiny_adapt(root, &bb, "trained", &["--epochs", "1", "--batches-per-epoch", "3", "--lr", "0.01"]);
    let lfs = root.join("lfs");
    ok(&["synth", "--count", "1", "--angular", "2", "--size", "16", "--seed", "9", "--out", s(&lfs)]);
    let input = lfs.join("lf_000");

    let plain = root.join("plain");
    let with_fresh = root.join("with_fresh");
    let with_trained = root.join("with_trained");
    ok(&["sr", "--backbone", s(&bb), "--in", s(&input), "--out", s(&plain), "--depth", "16"]);
    ok(&["sr", "--backbone", s(&bb), "--adapt", s(&fresh), "--in", s(&input), "--out", s(&with_fresh), "--depth", "16"]);
    ok(&["sr", "--backbone", s(&bb), "--adapt", s(&trained), "--in", s(&input), "--out", s(&with_trained), "--depth", "16"]);
    let mut changed = false;
    for u in 0..2 {
        for v in 0..2 {
            let name = format!("view_{u}_{v}.png");
            assert_eq!(image::open(plain.join(&name)).unwrap().to_rgb8().dimensions(), (32, 32));
            assert_eq!(hash(&plain.join(&name)), hash(&with_fresh.join(&name)), "{name}");
            changed |= hash(&plain.join(&name)) != hash(&with_trained.join(&name));
        }
    }
    assert!(changed, "a trained module should alter the output");

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(plain.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sr");
    assert!(manifest["config_digest"].is_string());
    let outputs = manifest["outputs"].as_array().unwrap();
    let names: Vec<&str> = outputs.iter().map(|o| o["path"].as_str().unwrap()).collect();
    assert!(names.contains(&"view_1_1.png") && names.contains(&"config.json"), "{names:?}");
    for o in outputs {
        let path = plain.join(o["path"].as_str().unwrap());
        assert_eq!(o["sha256"].as_str().unwrap(), hash(&path));
    }
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 5, "checkpoint and four input views");

    let err = fails_with(2, &["sr", "--backbone", s(&bb), "--adapt", s(&fresh), "--in", s(&input), "--scale", "3", "--out", s(&root.join("o3"))]);
    assert!(err.contains("--scale"), "{err}");
}

#[test]
fn identical_directories_score_the_sentinel() {
    let tmp = tempfile::tempdir().unwrap();
    let lfs = tmp.path().join("lfs");
    ok(&["synth", "--count", "2", "--angular", "2", "--size", "24", "--out", s(&lfs)]);
    let out = ok(&["eval", "--sr", s(&lfs), "--hr", s(&lfs), "--scale", "2", "--json"]);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["mean_psnr"], "identical");
    assert_eq!(doc["mean_ssim"], 1.0);
    assert_eq!(doc["scenes"].as_array().unwrap().len(), 2);

    let report = tmp.path().join("report");
    let out = ok(&["eval", "--sr", s(&lfs), "--hr", s(&lfs), "--scale", "2", "--out", s(&report)]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("inf"));
    assert!(report.join("report.json").is_file() && report.join("manifest.json").is_file());
}
