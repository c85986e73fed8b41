//! Scratch diagnostic for the rate-sweep schedule: trains (or reloads) the
//! staged pipeline, then fine-tunes each lambda arm in 150-step segments,
//! printing the aggregated rate point after every segment so the step count
//! needed for a monotone sweep can be read off directly.

use std::path::PathBuf;

use lbsvc::codec::{LbsvcModel, ModelConfig, Stage};
use lbsvc::error::Result;
use lbsvc::eval::evaluate_model;
use lbsvc::frame::Clip;
use lbsvc::synth::moving_gradient_clip;
use lbsvc::train::{train_stage, TrainConfig, LAMBDA_SET};

const SEGMENT: usize = 150;
const SEGMENTS: usize = 4;
const CLIP_FRAMES: usize = 3;

fn budget_config(stage: Stage, lambda_idx: usize, steps: usize) -> TrainConfig {
    let mut cfg = TrainConfig::for_stage(stage, lambda_idx);
    cfg.steps = steps;
    cfg.clip_frames = CLIP_FRAMES;
    cfg.batch_size = match stage {
        Stage::Bl => 2,
        Stage::El | Stage::Joint => 1,
    };
    cfg
}

fn report(models: &[(f64, LbsvcModel)], holdout: &[Clip], tag: &str) -> Result<()> {
    let refs: Vec<(f64, &LbsvcModel)> = models.iter().map(|(l, m)| (*l, m)).collect();
    let rep = evaluate_model(&refs, holdout, 8, 15, tag)?;
    let mut line = format!("[{tag}]");
    for lambda in LAMBDA_SET {
        let sel: Vec<_> = rep.rows.iter().filter(|r| r.lambda == lambda).collect();
        let bpp = sel.iter().map(|r| r.bpp).sum::<f64>() / sel.len() as f64;
        let q = sel.iter().map(|r| r.pu_psnr).sum::<f64>() / sel.len() as f64;
        line += &format!(" [{lambda}: {bpp:.5} bpp, {q:.3} dB]");
    }
    println!("{line}");
    Ok(())
}

fn main() -> Result<()> {
    let dir = PathBuf::from("/tmp/sweep_diag");
    std::fs::create_dir_all(&dir).unwrap();
    let data: Vec<Clip> = (0..8).map(|i| moving_gradient_clip(64, 64, 15, 100 + i)).collect();
    let holdout: Vec<Clip> = (0..2).map(|i| moving_gradient_clip(64, 64, 15, 900 + i)).collect();
    let t = std::time::Instant::now();
    let mut sink = std::io::sink();

    // staged pipeline with on-disk caching
    let mut model = LbsvcModel::new(ModelConfig::default())?;
    for stage in [Stage::Bl, Stage::El] {
        let path = dir.join(stage.name().to_lowercase());
        if path.with_extension("safetensors").exists() {
            model.load_weights(&path)?;
            println!("[diag] reloaded {} ({:.0}s)", stage.name(), t.elapsed().as_secs_f64());
        } else {
            let cfg = budget_config(stage, 1, 500);
            train_stage(&model, &cfg, &data, &mut sink)?;
            model.save(&path, stage.name(), LAMBDA_SET[1], cfg.steps)?;
            println!("[diag] trained {} ({:.0}s)", stage.name(), t.elapsed().as_secs_f64());
        }
    }

    let abl_path = dir.join("abl_el");
    if !abl_path.with_extension("safetensors").exists() {
        let mut abl = LbsvcModel::new(ModelConfig { use_bem: false, ..Default::default() })?;
        abl.load_weights(&dir.join("bl"))?;
        let cfg = budget_config(Stage::El, 1, 500);
        train_stage(&abl, &cfg, &data, &mut sink)?;
        abl.save(&abl_path, Stage::El.name(), LAMBDA_SET[1], cfg.steps)?;
        println!("[diag] trained ablated el ({:.0}s)", t.elapsed().as_secs_f64());
    } else {
        println!("[diag] ablated el cached");
    }

    // lambda arms, fine-tuned in segments with a shared batch seed
    let mut full: Vec<(f64, LbsvcModel)> = Vec::new();
    let mut ablated: Vec<(f64, LbsvcModel)> = Vec::new();
    for idx in 0..LAMBDA_SET.len() {
        let mut m = LbsvcModel::new(ModelConfig::default())?;
        m.load_weights(&dir.join("el"))?;
        full.push((LAMBDA_SET[idx], m));
        let mut a = LbsvcModel::new(ModelConfig { use_bem: false, ..Default::default() })?;
        a.load_weights(&abl_path)?;
        ablated.push((LAMBDA_SET[idx], a));
    }
    for seg in 1..=SEGMENTS {
        for arms in [&mut full, &mut ablated] {
            for (li, (_, m)) in arms.iter_mut().enumerate() {
                let mut cfg = budget_config(Stage::Joint, li, SEGMENT);
                cfg.seed = 7 + 100 * seg as u64; // same data schedule across arms
                cfg.warmup_steps = 0; // flow already bootstrapped in earlier stages
                train_stage(m, &cfg, &data, &mut sink)?;
            }
        }
        println!(
            "[diag] segment {seg} ({} steps total, {:.0}s)",
            seg * SEGMENT,
            t.elapsed().as_secs_f64()
        );
        report(&full, &holdout, &format!("full@{}", seg * SEGMENT))?;
        report(&ablated, &holdout, &format!("abl@{}", seg * SEGMENT))?;
    }
    Ok(())
}
