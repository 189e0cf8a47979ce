//! Acceptance suite: one PASS/FAIL/SKIP line per criterion.
//!
//! Runs without the libtest harness so every line reaches the terminal.
//! Criteria 4 and 5 share one desk-scale ablation run (about 35 minutes on one core);
//! `LFSAFA_EPFL_DIR` enables criterion 6. Failures are reported but only change
//! the exit status when `LFSAFA_ACCEPTANCE_STRICT=1`.

#[path = "common/mod.rs"]
mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use common::adapt_oracle::{features, flag_variants, live_params, max_gap, oracle, Map};
use common::grad_ops::{op_reports, TOL};
use lfsafa::ablation::{run_ablation, AblationConfig, AblationReport};
use lfsafa::adapt::{adapt_all_views, AdaptConfig, AdaptFlags, AdaptationParams};
use lfsafa::backbone::{BackboneConfig, BackboneParams};
use lfsafa::data::io::{decode_lf, detect_angular, write_lf_dir, BitDepth};
use lfsafa::data::synth::synth_dataset;
use lfsafa::data::{ColorSpace, LightField};
use lfsafa::diagnostics::{composite_gradient_check, CompositeCheck};
use lfsafa::metrics::{bicubic_baseline, mean_over_scenes, psnr, ssim, EvalOptions};
use lfsafa::nn::{checksum, Tensor};
use lfsafa::train::{save_adaptation, save_backbone, train_adaptation_with, train_backbone, Phase, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn gradients() -> Result<Verdict> {
    let mut worst_op: f64 = 0.0;
    let mut composite: f64 = 0.0;
    let (mut checked, mut skipped) = (0, 0);
    for seed in 0..20 {
        for (_, r) in op_reports(seed) {
            worst_op = worst_op.max(r.max_rel_error);
        }
        let r = composite_gradient_check(&CompositeCheck::default(), seed)?;
        composite = composite.max(r.max_rel_error);
        checked += r.checked;
        skipped += r.skipped;
    }
    Ok(verdict(
        worst_op < TOL && composite < TOL && checked > 0,
        format!("20 seeds, ops max rel {worst_op:.2e}, composite max rel {composite:.2e} ({checked} coords, {skipped} on kinks)"),
    ))
}

fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.is_dir() {
            out.extend(files_in(&p));
        } else if p.extension().is_some_and(|e| e == "png") {
            out.push(p);
        }
    }
    out.sort();
    out
}

fn zero_init_identity() -> Result<Verdict> {
    let tmp = tempfile::tempdir()?;
    let root = tmp.path();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let cfg = BackboneConfig {
        image_channels: 1,
        width: 8,
        blocks: 2,
        scale: 2,
    };
    let backbone = BackboneParams::init(cfg, &mut rng)?.set_frozen(true);
    let adapt = AdaptationParams::init(AdaptConfig::new(3, 8, 4, AdaptFlags::default()), &mut rng)?;
    let bb_path = root.join("bb.lfsa");
    let ad_path = root.join("ad.lfsa");
    save_backbone(&backbone, &bb_path, None)?;
    save_adaptation(&adapt, 2, &ad_path, None, Some(checksum(&backbone)))?;
    let input = root.join("lr");
    for i in 0..10 {
        let lf = LightField::new(Tensor::uniform(vec![3, 3, 3, 16, 16], 0.0, 1.0, &mut rng), ColorSpace::Rgb)?;
        write_lf_dir(&lf, &input.join(format!("lf_{i:02}")), BitDepth::Sixteen)?;
    }
    let run = |extra: &[&Path], out: &Path| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_lfsafa"));
        cmd.args(["sr", "--depth", "16", "--backbone"]).arg(&bb_path).arg("--in").arg(&input).arg("--out").arg(out);
        if let Some(p) = extra.first() {
            cmd.arg("--adapt").arg(p);
        }
        cmd.output().map(|o| o.status.success()).unwrap_or(false)
    };
    let (plain, with) = (root.join("plain"), root.join("with"));
    if !run(&[], &plain) || !run(&[&ad_path], &with) {
        return Ok(Verdict::Fail("lfsafa sr failed".into()));
    }
    let a = files_in(&plain);
    let b = files_in(&with);
    let same = a.len() == 90
        && a.len() == b.len()
        && a.iter().zip(&b).all(|(x, y)| std::fs::read(x).ok() == std::fs::read(y).ok());
    Ok(verdict(same, format!("{} of 90 views written, byte-identical: {same}", a.len())))
}

fn oracle_equivalence() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    let mut worst: f64 = 0.0;
    for angular in [2, 3] {
        for flags in flag_variants() {
            let p = live_params(angular, 4, 3, flags, &mut rng);
            let feats = features(angular * angular, 4, 6, 5, &mut rng);
            let got = adapt_all_views(&feats, &p)?;
            let maps: Vec<Map> = feats.iter().map(Map::from_tensor).collect();
            worst = worst.max(max_gap(&got, &oracle(&maps, &p)));
        }
    }
    Ok(verdict(worst <= 1e-5, format!("a in {{2, 3}}, 3 flag sets, max abs gap {worst:.2e}")))
}

fn adaptation_gain(r: &AblationReport) -> Verdict {
    let base = r.row("no-module").expect("row").mean_psnr;
    let full = r.row("full@3x3").expect("row");
    let gain = full.mean_psnr - base;
    let minutes = (r.backbone_seconds + full.seconds) / 60.0;
    verdict(
        gain >= 0.2 && minutes < 15.0,
        format!("{base:.3} -> {:.3} dB, gain {gain:.3} dB after 300 steps, {minutes:.1} min", full.mean_psnr),
    )
}

fn ablation_ordering(r: &AblationReport, minutes: f64) -> Verdict {
    let p = |n: &str| r.row(n).expect("row").mean_psnr;
    let chain = [p("full@5x5"), p("full@3x3"), p("no-diff"), p("no-module")];
    let ordered = chain.windows(2).all(|w| w[0] >= w[1]);
    let diff_gap = p("full@3x3") - p("no-diff");
    verdict(
        ordered && diff_gap >= 0.05 && minutes < 45.0,
        format!(
            "5x5 {:.3} >= 3x3 {:.3} >= no-diff {:.3} >= no-module {:.3}: {ordered}; diff gap {diff_gap:.3} dB; no-residual {:.3}; {minutes:.1} min",
            chain[0],
            chain[1],
            chain[2],
            chain[3],
            p("no-residual")
        ),
    )
}

fn load_dataset(dir: &Path) -> Result<Vec<LightField>> {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    entries.sort();
    let lfs = entries
        .iter()
        .map(|p| {
            let lf = decode_lf(p, detect_angular(p)?)?;
            if lf.angular() > 5 {
                lf.center_subset(5)
            } else {
                Ok(lf)
            }
        })
        .collect::<lfsafa::Result<Vec<_>>>()?;
    Ok(lfs)
}

fn bicubic_reference() -> Result<Verdict> {
    let Some(dir) = std::env::var_os("LFSAFA_EPFL_DIR") else {
        return Ok(Verdict::Skip("LFSAFA_EPFL_DIR not set".into()));
    };
    let lfs = load_dataset(Path::new(&dir))?;
    let opts = EvalOptions {
        quantize: true,
        ..EvalOptions::for_scale(2)
    };
    let reports = lfs.iter().map(|lf| bicubic_baseline(lf, &opts)).collect::<lfsafa::Result<Vec<_>>>()?;
    let (p, s) = mean_over_scenes(&reports);
    Ok(verdict(
        (p - 29.50).abs() <= 0.2 && (s - 0.935).abs() <= 0.005,
        format!("{} light fields, {p:.2}/{s:.3} vs 29.50/0.935", lfs.len()),
    ))
}

fn tiny(phase: Phase) -> TrainConfig {
    let mut c = TrainConfig::desk(phase);
    c.backbone.width = 6;
    c.backbone.blocks = 1;
    c.sas_width = 3;
    c.patch = 8;
    c.batch = 2;
    c.epochs = 2;
    c.batches_per_epoch = 3;
    c
}

fn protocol() -> Result<Verdict> {
    let trace = TrainConfig::paper(Phase::Adaptation).lr_trace();
    let expected: Vec<f32> = [1e-4f32, 5e-5, 2.5e-5, 1.25e-5, 6.25e-6]
        .iter()
        .flat_map(|&lr| std::iter::repeat_n(lr, 50))
        .collect();
    let staircase = trace == expected;

    let ds = synth_dataset(3, 3, 1.0, 24, 4)?;
    let run = || -> lfsafa::Result<(String, Vec<u32>, String, bool)> {
        let bb = train_backbone(&ds, &tiny(Phase::Backbone))?;
        let backbone = bb.params.set_frozen(true);
        let before = checksum(&backbone);
        let mut constant = true;
        let ad = train_adaptation_with(&ds, &backbone, &tiny(Phase::Adaptation), &mut |_| {
            constant &= checksum(&backbone) == before;
            Ok(())
        })?;
        constant &= checksum(&backbone) == before;
        let losses = bb.log.iter().chain(&ad.log).map(|r| r.loss.to_bits()).collect();
        Ok((before, losses, checksum(&ad.params), constant))
    };
    let first = run()?;
    let second = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()?
        .install(run)?;
    let frozen = first.3 && second.3;
    let deterministic = first == second;
    Ok(verdict(
        staircase && frozen && deterministic,
        format!("staircase {staircase}, frozen checksum constant {frozen}, reruns bitwise identical {deterministic}"),
    ))
}

fn metric_sanity() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let a: Tensor<f32> = Tensor::uniform(vec![1, 32, 32], 0.0, 0.9, &mut rng);
    let b = a.map(|v| v + 16.0 / 255.0);
    let closed = psnr(&a, &b)?;
    let noisy = a.zip_map(&Tensor::uniform(vec![1, 32, 32], -0.1, 0.1, &mut rng), "noise", |x, n| x + n)?;
    let same = ssim(&a, &a)?;
    let symmetric = psnr(&a, &noisy)? == psnr(&noisy, &a)? && (ssim(&a, &noisy)? - ssim(&noisy, &a)?).abs() < 1e-12;
    Ok(verdict(
        (closed - 24.05).abs() <= 0.01 && same == 1.0 && symmetric,
        format!("16/255 error {closed:.3} dB, SSIM(x, x) = {same}, symmetric {symmetric}"),
    ))
}

/// Fails a passing verdict that took longer than `limit` seconds.
fn within(limit: f64, t: Instant, v: Result<Verdict>) -> Result<Verdict> {
    let secs = t.elapsed().as_secs_f64();
    match v {
        Ok(Verdict::Pass(d)) if secs >= limit => Ok(Verdict::Fail(format!("{d}; over the {limit:.0}s limit"))),
        other => other,
    }
}

fn main() -> ExitCode {
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut failed = false;
    let mut report = |n: usize, name: &str, t: Instant, v: Result<Verdict>| {
        let secs = t.elapsed().as_secs_f64();
        let line = match v {
            Ok(Verdict::Pass(d)) => format!("PASS  {n}. {name}: {d} [{secs:.1}s]"),
            Ok(Verdict::Skip(d)) => format!("SKIP  {n}. {name}: {d}"),
            Ok(Verdict::Fail(d)) => {
                failed = true;
                format!("FAIL  {n}. {name}: {d} [{secs:.1}s]")
            }
            Err(e) => {
                failed = true;
                format!("FAIL  {n}. {name}: error: {e}")
            }
        };
        println!("{line}");
    };

    let t = Instant::now();
    report(1, "gradient correctness", t, within(120.0, t, gradients()));
    let t = Instant::now();
    report(2, "zero-init identity", t, within(60.0, t, zero_init_identity()));
    let t = Instant::now();
    report(3, "oracle equivalence", t, oracle_equivalence());

    let t = Instant::now();
    let ablation = run_ablation(&AblationConfig::desk(), &mut |line| eprintln!("  ablation: {line}"));
    let minutes = t.elapsed().as_secs_f64() / 60.0;
    match &ablation {
        Ok(r) => {
            report(4, "desk-scale adaptation gain", t, Ok(adaptation_gain(r)));
            report(5, "ablation ordering", t, Ok(ablation_ordering(r, minutes)));
        }
        Err(e) => {
            report(4, "desk-scale adaptation gain", t, Ok(Verdict::Fail(format!("error: {e}"))));
            report(5, "ablation ordering", t, Ok(Verdict::Fail(format!("error: {e}"))));
        }
    }

    let t = Instant::now();
    report(6, "bicubic baseline", t, bicubic_reference());
    let t = Instant::now();
    report(7, "schedule and protocol", t, protocol());
    let t = Instant::now();
    report(8, "metric sanity", t, metric_sanity());

    let strict = std::env::var("LFSAFA_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    if failed {
        println!("acceptance: at least one criterion failed");
    }
    if failed && strict {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
