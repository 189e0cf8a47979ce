use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Instant;

use serde_json::json;

use lfsafa::ablation::{run_ablation, AblationConfig};
use lfsafa::backbone::BackboneParams;
use lfsafa::data::degrade::{degrade_pair, modcrop};
use lfsafa::data::io::{decode_lf, detect_angular, encode_macro_pixel, write_image, write_lf_dir, BitDepth};
use lfsafa::data::synth::synth_dataset;
use lfsafa::data::LightField;
use lfsafa::diagnostics::{composite_gradient_check, CompositeCheck};
use lfsafa::metrics::{bicubic_baseline, evaluate_lf, format_psnr, mean_over_scenes, EvalOptions, EvalReport};
use lfsafa::nn::checksum;
use lfsafa::pipeline::super_resolve;
use lfsafa::train::{
    load_adaptation, load_backbone, save_adaptation, save_backbone, train_adaptation_with, train_backbone_with,
    LogRecord, Phase, TrainConfig,
};
use lfsafa::{Error, Result};

use super::artifacts::{file_manifest, load_scenes, Collection, OutDir};
use super::{AblateArgs, BicubicArgs, DecodeArgs, DegradeArgs, EncodeArgs, EvalArgs, GradcheckArgs, SrArgs, SynthArgs, TrainArgs};

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

fn io_err(path: &std::path::Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn depth_name(d: BitDepth) -> u8 {
    match d {
        BitDepth::Eight => 8,
        BitDepth::Sixteen => 16,
    }
}

pub fn decode(a: DecodeArgs) -> Result<()> {
    let lf = decode_lf(&a.input, a.angular)?;
    let depth: BitDepth = a.depth.into();
    let mut out = OutDir::create(&a.out.out, a.out.force)?;
    out.record_all(write_lf_dir(&lf, &out.path(""), depth)?);
    eprintln!(
        "decoded {0}x{0} views of {1}x{2} into {3}",
        lf.angular(),
        lf.height(),
        lf.width(),
        a.out.out.display()
    );
    let config = json!({ "input": a.input, "angular": a.angular, "depth": depth_name(depth) });
    out.finish("decode", &config, &[a.input])
}

pub fn encode(a: EncodeArgs) -> Result<()> {
    if a.out.exists() && !a.force {
        return Err(invalid(format!("{} already exists; pass --force to overwrite", a.out.display())));
    }
    let angular = match a.angular {
        Some(n) => n,
        None => detect_angular(&a.input)?,
    };
    let lf = decode_lf(&a.input, angular)?;
    let depth: BitDepth = a.depth.into();
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    write_image(&a.out, &encode_macro_pixel(&lf), depth)?;
    eprintln!("wrote {0}x{0} macro-pixel image {1}", angular, a.out.display());
    let config = json!({ "input": a.input, "angular": angular, "depth": depth_name(depth) });
    file_manifest(&a.out, "encode", &config, &[a.input])
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let data = synth_dataset(a.count, a.angular, a.disparity, a.size, a.seed)?;
    let depth: BitDepth = a.depth.into();
    let mut out = OutDir::create(&a.out.out, a.out.force)?;
    for (i, lf) in data.iter().enumerate() {
        out.record_all(write_lf_dir(lf, &out.path(format!("lf_{i:03}")), depth)?);
    }
    eprintln!("wrote {} synthetic light fields to {}", data.len(), a.out.out.display());
    let config = json!({
        "count": a.count,
        "angular": a.angular,
        "disparity": a.disparity,
        "size": a.size,
        "seed": a.seed,
        "depth": depth_name(depth),
    });
    out.finish("synth", &config, &[])
}

pub fn degrade(a: DegradeArgs) -> Result<()> {
    let scenes = load_scenes(&a.input, a.angular)?;
    let depth: BitDepth = a.depth.into();
    let mut out = OutDir::create(&a.out.out, a.out.force)?;
    for scene in &scenes.scenes {
        let (lr, _) = degrade_pair(&scene.lf, a.scale)?;
        out.record_all(write_lf_dir(&lr, &scenes.scene_dir(&a.out.out, scene), depth)?);
    }
    let config = json!({ "input": a.input, "scale": a.scale, "depth": depth_name(depth) });
    out.finish("degrade", &config, &[a.input])
}

fn apply_overrides(cfg: &mut TrainConfig, a: &TrainArgs) {
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batches_per_epoch {
        cfg.batches_per_epoch = v;
    }
    if let Some(v) = a.lr {
        cfg.lr0 = v;
    }
    if let Some(v) = a.patch {
        cfg.patch = v;
    }
    if let Some(v) = a.batch {
        cfg.batch = v;
    }
    if let Some(v) = a.width {
        cfg.backbone.width = v;
    }
    if let Some(v) = a.blocks {
        cfg.backbone.blocks = v;
    }
    if let Some(v) = a.sas_width {
        cfg.sas_width = v;
    }
    if let Some(v) = a.val_fraction {
        cfg.val_fraction = v;
    }
    if a.no_augment {
        cfg.augment = false;
    }
}

fn training_data(a: &TrainArgs, angular: usize) -> Result<Vec<LightField>> {
    let Some(path) = &a.data else {
        return synth_dataset(a.synth, angular, a.disparity, a.size, a.data_seed);
    };
    load_scenes(path, None)?
        .scenes
        .into_iter()
        .map(|s| match s.lf.angular() {
            n if n == angular => Ok(s.lf),
            n if n > angular => s.lf.center_subset(angular),
            n => Err(invalid(format!(
                "{} has {n}x{n} views, fewer than the configured {angular}x{angular}",
                s.name
            ))),
        })
        .collect()
}

pub fn train(a: TrainArgs) -> Result<()> {
    let phase: Phase = a.phase.into();
    let mut cfg = TrainConfig::preset(a.preset.into(), phase);
    let backbone: Option<BackboneParams> = match (phase, &a.backbone) {
        (Phase::Adaptation, None) => {
            return Err(invalid("--phase adapt requires --backbone <checkpoint>"));
        }
        (Phase::Backbone, Some(_)) => {
            return Err(invalid("--backbone only applies to --phase adapt"));
        }
        (Phase::Adaptation, Some(path)) => Some(load_backbone(path)?.0.set_frozen(true)),
        (Phase::Backbone, None) => None,
    };
    if phase == Phase::Backbone && !matches!(a.ablation, super::Ablation::Full) {
        return Err(invalid("--ablation only applies to --phase adapt"));
    }
    if let Some(s) = a.scale {
        cfg = cfg.with_scale(s);
    }
    if let Some(n) = a.angular {
        cfg.angular = n;
    }
    apply_overrides(&mut cfg, &a);
    cfg.flags = a.ablation.into();
    if let Some(bb) = &backbone {
        if a.scale.is_some_and(|s| s != bb.config.scale) {
            return Err(invalid(format!(
                "--scale {} does not match the backbone checkpoint (x{})",
                cfg.scale, bb.config.scale
            )));
        }
        cfg = cfg.with_scale(bb.config.scale);
        cfg.backbone = bb.config;
    }
    cfg.validate()?;
    let data = training_data(&a, cfg.angular)?;

    let mut out = OutDir::create(&a.out.out, a.out.force)?;
    let log_path = out.path("train_log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| io_err(&log_path, e))?);
    let per_epoch = cfg.batches_per_epoch;
    let mut sink = |r: &LogRecord| -> Result<()> {
        serde_json::to_writer(&mut log, r)?;
        writeln!(log).map_err(|e| io_err(&log_path, e))?;
        if (r.step + 1) % per_epoch == 0 {
            let val = r.psnr_val.map(|p| format!("  val {}", format_psnr(p))).unwrap_or_default();
            eprintln!("epoch {:>3}  step {:>6}  lr {:.3e}  loss {:.5}{val}", r.epoch, r.step + 1, r.lr, r.loss);
        }
        Ok(())
    };
    let started = Instant::now();
    let digest = cfg.digest();
    let (checkpoint, final_loss, steps) = match &backbone {
        None => {
            let outcome = train_backbone_with(&data, &cfg, &mut sink)?;
            let path = out.path("backbone.lfsa");
            save_backbone(&outcome.params.clone().set_frozen(true), &path, Some(digest.clone()))?;
            (path, outcome.final_loss(), outcome.log.len())
        }
        Some(bb) => {
            let outcome = train_adaptation_with(&data, bb, &cfg, &mut sink)?;
            let path = out.path("adapt.lfsa");
            save_adaptation(&outcome.params, cfg.scale, &path, Some(digest.clone()), Some(checksum(bb)))?;
            (path, outcome.final_loss(), outcome.log.len())
        }
    };
    log.flush().map_err(|e| io_err(&log_path, e))?;
    drop(log);
    let seconds = started.elapsed().as_secs_f64();
    eprintln!("saved {} after {steps} steps in {seconds:.1}s", checkpoint.display());
    out.record(log_path);
    out.record(checkpoint);
    out.write_json("summary.json", &json!({ "steps": steps, "final_loss": final_loss, "seconds": seconds }))?;

    let config = json!({
        "train": cfg,
        "config_digest": digest,
        "data": match &a.data {
            Some(p) => json!({ "path": p }),
            None => json!({
                "synthetic": a.synth,
                "size": a.size,
                "disparity": a.disparity,
                "seed": a.data_seed,
            }),
        },
        "backbone": a.backbone,
    });
    let inputs: Vec<PathBuf> = a.data.iter().chain(a.backbone.iter()).cloned().collect();
    out.finish("train", &config, &inputs)
}

pub fn sr(a: SrArgs) -> Result<()> {
    let (backbone, _) = load_backbone(&a.backbone)?;
    if let Some(s) = a.scale {
        if s != backbone.config.scale {
            return Err(invalid(format!(
                "--scale {s} does not match the backbone checkpoint (x{})",
                backbone.config.scale
            )));
        }
    }
    let scenes = load_scenes(&a.input, a.angular)?;
    let adapt = match &a.adapt {
        None => None,
        Some(path) => {
            let angular = scenes.scenes[0].lf.angular();
            let (params, meta) = load_adaptation(path, Some(angular))?;
            if meta.scale != backbone.config.scale {
                return Err(invalid(format!(
                    "adaptation checkpoint is for x{} but the backbone is x{}",
                    meta.scale, backbone.config.scale
                )));
            }
            if let Some(expected) = &meta.backbone_checksum {
                if *expected != checksum(&backbone) {
                    return Err(invalid(format!(
                        "{} was trained on a different backbone than {}",
                        path.display(),
                        a.backbone.display()
                    )));
                }
            }
            Some(params)
        }
    };
    let depth: BitDepth = a.depth.into();
    let mut out = OutDir::create(&a.out.out, a.out.force)?;
    for scene in &scenes.scenes {
        let sr = super_resolve(&backbone, adapt.as_ref(), &scene.lf)?;
        out.record_all(write_lf_dir(&sr, &scenes.scene_dir(&a.out.out, scene), depth)?);
        eprintln!("{}: {}x{} -> {}x{}", scene.name, scene.lf.height(), scene.lf.width(), sr.height(), sr.width());
    }
    let config = json!({
        "backbone": a.backbone,
        "adapt": a.adapt,
        "input": a.input,
        "scale": backbone.config.scale,
        "depth": depth_name(depth),
    });
    let inputs: Vec<PathBuf> = [a.backbone.clone(), a.input.clone()].into_iter().chain(a.adapt.clone()).collect();
    out.finish("sr", &config, &inputs)
}

#[derive(serde::Serialize)]
struct SceneReport<'a> {
    name: &'a str,
    #[serde(flatten)]
    report: &'a EvalReport,
}

fn report_outputs(
    scenes: &Collection,
    reports: &[EvalReport],
    json_stdout: bool,
    out: Option<(&PathBuf, bool)>,
    command: &str,
    config: serde_json::Value,
    inputs: &[PathBuf],
) -> Result<()> {
    let (mean_psnr, mean_ssim) = mean_over_scenes(reports);
    let rows: Vec<SceneReport> = scenes
        .scenes
        .iter()
        .zip(reports)
        .map(|(s, r)| SceneReport { name: &s.name, report: r })
        .collect();
    let psnr_json = if mean_psnr.is_infinite() { json!("identical") } else { json!(mean_psnr) };
    let doc = json!({ "scenes": rows, "mean_psnr": psnr_json, "mean_ssim": mean_ssim });
    let mut table = String::new();
    for (s, r) in scenes.scenes.iter().zip(reports) {
        table.push_str(&format!("== {}\n{}\n", s.name, r.to_table()));
    }
    table.push_str(&format!(
        "mean over {} light field(s): PSNR {} dB  SSIM {:.4}\n",
        reports.len(),
        format_psnr(mean_psnr),
        mean_ssim
    ));
    if json_stdout {
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        print!("{table}");
    }
    if let Some((dir, force)) = out {
        let mut out = OutDir::create(dir, force)?;
        out.write_json("report.json", &doc)?;
        out.write_text("report.txt", &table)?;
        out.finish(command, &config, inputs)?;
    }
    Ok(())
}

fn eval_options(scale: usize, border: Option<usize>, quantize: bool) -> EvalOptions {
    EvalOptions {
        scale,
        border_crop: border.unwrap_or(scale),
        quantize,
    }
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let sr = load_scenes(&a.sr, a.angular)?;
    let hr = load_scenes(&a.hr, a.angular)?;
    if sr.scenes.len() != hr.scenes.len() {
        return Err(invalid(format!(
            "{} holds {} light field(s) but {} holds {}",
            a.sr.display(),
            sr.scenes.len(),
            a.hr.display(),
            hr.scenes.len()
        )));
    }
    let opts = eval_options(a.scale, a.border, a.quantize);
    let mut reports = Vec::new();
    for (s, h) in sr.scenes.iter().zip(&hr.scenes) {
        if !sr.single && s.name != h.name {
            return Err(invalid(format!("light field {} has no ground truth named alike ({})", s.name, h.name)));
        }
        let hr_lf = modcrop(&h.lf, a.scale)?;
        reports.push(evaluate_lf(&s.lf, &hr_lf, &opts)?);
    }
    let config = json!({
        "sr": a.sr,
        "hr": a.hr,
        "scale": a.scale,
        "border_crop": opts.border_crop,
        "quantize": a.quantize,
    });
    let inputs = [a.sr.clone(), a.hr.clone()];
    report_outputs(&sr, &reports, a.json, a.out.as_ref().map(|o| (o, a.force)), "eval", config, &inputs)
}

pub fn bicubic(a: BicubicArgs) -> Result<()> {
    let hr = load_scenes(&a.hr, a.angular)?;
    let opts = eval_options(a.scale, a.border, a.quantize);
    let reports = hr
        .scenes
        .iter()
        .map(|s| bicubic_baseline(&s.lf, &opts))
        .collect::<Result<Vec<_>>>()?;
    let config = json!({
        "hr": a.hr,
        "scale": a.scale,
        "border_crop": opts.border_crop,
        "quantize": a.quantize,
    });
    let inputs = [a.hr.clone()];
    report_outputs(&hr, &reports, a.json, a.out.as_ref().map(|o| (o, a.force)), "bicubic", config, &inputs)
}

pub fn ablate(a: AblateArgs) -> Result<()> {
    let mut cfg = AblationConfig::desk();
    if let Some(v) = a.train_count {
        cfg.train_count = v;
    }
    if let Some(v) = a.test_count {
        cfg.test_count = v;
    }
    if let Some(v) = a.size {
        cfg.size = v;
    }
    if let Some(v) = a.seed {
        cfg.backbone.seed = v;
        cfg.adapt.seed = v;
    }
    if let Some(v) = a.batches_per_epoch {
        cfg.adapt.batches_per_epoch = v;
    }
    if let Some(v) = a.epochs {
        cfg.adapt.epochs = v;
    }
    cfg.validate()?;
    let mut out = OutDir::create(&a.out.out, a.out.force)?;
    let report = run_ablation(&cfg, &mut |line| eprintln!("{line}"))?;
    let table = report.to_table();
    print!("{table}");
    out.write_json("ablation.json", &report)?;
    out.write_text("ablation.txt", &table)?;
    out.finish("ablate", &serde_json::to_value(&cfg)?, &[])
}

pub fn gradcheck(a: GradcheckArgs) -> Result<()> {
    if a.seeds == 0 {
        return Err(invalid("--seeds must be at least 1"));
    }
    let check = CompositeCheck {
        angular: a.angular,
        size: a.size,
        ..CompositeCheck::default()
    };
    let mut worst: f64 = 0.0;
    let (mut checked, mut skipped) = (0, 0);
    for seed in 0..a.seeds {
        let r = composite_gradient_check(&check, seed)?;
        println!(
            "seed {seed:>3}  max rel error {:.3e}  checked {}  refined {}  skipped {}",
            r.max_rel_error, r.checked, r.refined, r.skipped
        );
        worst = worst.max(r.max_rel_error);
        checked += r.checked;
        skipped += r.skipped;
    }
    println!("worst {worst:.3e} over {checked} coordinates ({skipped} on kinks, not compared)");
    if worst >= a.tolerance {
        return Err(Error::Autograd(format!(
            "maximum relative error {worst:.3e} exceeds {:.1e}",
            a.tolerance
        )));
    }
    Ok(())
}
