//! The CLI subcommands as library functions writing into `cfg.paths.out`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zsdn_core::metrics::decibels;
use zsdn_core::{corrupt, denoise_mmse, error_map, snr_db, EvalReport, Image};

use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::error::{AppError, AppResult};
use crate::experiment::{aligned_crop, clean_image, evaluate, noisy_image, AblationAxis, AblationRow, Runner};
use crate::io;

pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_FILE: &str = "model.zsdn";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const DENOISED_FILE: &str = "denoised.f32";
pub const REPORT_FILE: &str = "report.json";

fn prepare_out(cfg: &ExperimentConfig) -> AppResult<PathBuf> {
    let out = cfg.paths.out.clone();
    fs::create_dir_all(&out).map_err(|e| AppError::io(&out, e))?;
    cfg.save(&out.join(CONFIG_FILE))?;
    Ok(out)
}

/// Raw image plus a 16-bit PNG preview next to it.
fn save_with_preview(img: &Image, path: &Path, data_range: f64) -> AppResult<()> {
    io::save_raw(img, path, data_range)?;
    io::save_png(img, &path.with_extension("png"), 16, data_range)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrRecord {
    pub file: String,
    pub a: f64,
    pub b: f64,
    #[serde(with = "decibels")]
    pub snr_db: f64,
}

pub fn noisy_file_name(a: f64, b: f64) -> String {
    format!("noisy_a{a}_b{b}.f32")
}

/// Writes the clean phantom, one noisy image per level and `snr.jsonl`.
pub fn simulate(cfg: &ExperimentConfig) -> AppResult<Vec<SnrRecord>> {
    for level in &cfg.noise_levels {
        level.validate_corruption()?;
    }
    if cfg.noise_levels.is_empty() {
        return Err(AppError::Config("no noise levels to simulate".into()));
    }
    let clean = clean_image(cfg)?;
    let out = prepare_out(cfg)?;
    save_with_preview(&clean, &out.join("clean.f32"), cfg.data_range)?;
    let mut records = Vec::new();
    for (i, level) in cfg.noise_levels.iter().enumerate() {
        let noisy = corrupt(&clean, *level, cfg.noise_seed.derive(i as u64))?;
        let file = noisy_file_name(level.a, level.b);
        save_with_preview(&noisy, &out.join(&file), cfg.data_range)?;
        records.push(SnrRecord {
            file,
            a: level.a,
            b: level.b,
            snr_db: snr_db(&clean, &noisy)?,
        });
    }
    io::write_jsonl(&out.join("snr.jsonl"), &records)?;
    Ok(records)
}

/// Trains on the configured input and writes the checkpoint and epoch log.
pub fn train(cfg: &ExperimentConfig, progress_every: usize) -> AppResult<PathBuf> {
    cfg.validate()?;
    let out = prepare_out(cfg)?;
    let mut runner = Runner::new(progress_every);
    let t = runner.trained(cfg)?;
    io::save_raw(&t.noisy, &out.join("noisy.f32"), cfg.data_range)?;
    io::write_jsonl(&out.join(TRAIN_LOG_FILE), &t.log.epochs)?;
    let path = out.join(CHECKPOINT_FILE);
    checkpoint::save(&t.model, &path)?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiseOutcome {
    pub denoised: Image,
    pub report: Option<EvalReport>,
}

/// Runs the `m`-draw estimate with a stored checkpoint. A report and error
/// map are written when ground truth is known: either `paths.clean`, or the
/// phantom when the input itself is simulated.
pub fn denoise(cfg: &ExperimentConfig) -> AppResult<DenoiseOutcome> {
    let ckpt = cfg
        .paths
        .checkpoint
        .as_ref()
        .ok_or_else(|| AppError::Config("denoise needs a checkpoint (--checkpoint)".into()))?;
    let model = checkpoint::load(ckpt)?;
    if model.config() != &cfg.net {
        return Err(AppError::Config("checkpoint network differs from the configured network".into()));
    }
    cfg.validate()?;
    let clean = if cfg.paths.clean.is_some() || cfg.paths.input.is_none() {
        Some(clean_image(cfg)?)
    } else {
        None
    };
    let noisy = noisy_image(cfg, clean.as_ref())?;
    let out = prepare_out(cfg)?;
    let denoised = denoise_mmse(&model, &noisy, &cfg.mmse)?;
    save_with_preview(&denoised, &out.join(DENOISED_FILE), cfg.data_range)?;
    let report = match &clean {
        Some(clean) => {
            let report = evaluate(clean, &denoised, cfg.data_range)?;
            let (h, w) = denoised.dims();
            let reference = aligned_crop(clean, clean.dims(), h, w)?;
            save_with_preview(&error_map(&reference, &denoised)?, &out.join("error_map.f32"), cfg.data_range)?;
            io::write_json(&out.join(REPORT_FILE), &report)?;
            Some(report)
        }
        None => None,
    };
    Ok(DenoiseOutcome { denoised, report })
}

/// Scores `test` against `reference` (center-aligned) and writes the report.
pub fn eval(cfg: &ExperimentConfig, reference: &Path, test: &Path) -> AppResult<EvalReport> {
    let r = io::load_image(reference)?;
    let t = io::load_image(test)?;
    let report = evaluate(&r, &t, cfg.data_range)?;
    let out = prepare_out(cfg)?;
    let (h, w) = t.dims();
    let aligned = aligned_crop(&r, r.dims(), h, w)?;
    save_with_preview(&error_map(&aligned, &t)?, &out.join("error_map.f32"), cfg.data_range)?;
    io::write_json(&out.join(REPORT_FILE), &report)?;
    Ok(report)
}

/// Runs one sweep and writes `ablation_<axis>.jsonl`, one row per setting.
pub fn ablate(
    cfg: &ExperimentConfig,
    axis: AblationAxis,
    runner: &mut Runner,
    sink: &mut dyn FnMut(&AblationRow),
) -> AppResult<Vec<AblationRow>> {
    cfg.validate()?;
    let out = prepare_out(cfg)?;
    let rows = runner.ablate(cfg, axis, sink)?;
    io::write_jsonl(&out.join(format!("ablation_{}.jsonl", axis.name())), &rows)?;
    Ok(rows)
}
