//! Training runs, evaluation on aligned crops, and the ablation sweeps.

use std::collections::HashMap;
use std::rc::Rc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use zsdn_core::filter::gaussian_blur_3x3;
use zsdn_core::metrics::decibels;
use zsdn_core::train::{train_zero_shot_with, Clock, EpochRecord, TrainHooks};
use zsdn_core::{
    corrupt, crop, denoise_mmse, generate_lattice, psnr, ssim, EvalReport, Image, Model, NetConfig, Strategy,
    TrainLog, Upsampling,
};

use crate::config::ExperimentConfig;
use crate::error::{AppError, AppResult};
use crate::io;

/// Wall-clock time since construction.
#[derive(Debug, Clone, Copy)]
pub struct SystemClock(Instant);

impl Default for SystemClock {
    fn default() -> Self {
        Self(Instant::now())
    }
}

impl Clock for SystemClock {
    fn now_seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Ground truth from `paths.clean`, or the configured phantom.
pub fn clean_image(cfg: &ExperimentConfig) -> AppResult<Image> {
    match &cfg.paths.clean {
        Some(p) => io::load_image(p),
        None => Ok(generate_lattice(&cfg.phantom)?),
    }
}

/// Noisy input from `paths.input`, or `clean` corrupted with `cfg.noise`.
pub fn noisy_image(cfg: &ExperimentConfig, clean: Option<&Image>) -> AppResult<Image> {
    match (&cfg.paths.input, clean) {
        (Some(p), _) => io::load_image(p),
        (None, Some(clean)) => {
            cfg.noise.validate_corruption()?;
            Ok(corrupt(clean, cfg.noise, cfg.noise_seed)?)
        }
        (None, None) => Err(AppError::Config("no input image and no clean image to simulate from".into())),
    }
}

/// The `height x width` window of `full` that lies at the center of a
/// `full_dims` image, taken from `img` which is itself centered in it.
pub fn aligned_crop(img: &Image, full_dims: (usize, usize), height: usize, width: usize) -> AppResult<Image> {
    let (fh, fw) = full_dims;
    let (ih, iw) = img.dims();
    if height > ih || width > iw || ih > fh || iw > fw {
        return Err(AppError::Core(zsdn_core::Error::DimensionMismatch(ih, iw, height, width)));
    }
    let top = (fh - height) / 2 - (fh - ih) / 2;
    let left = (fw - width) / 2 - (fw - iw) / 2;
    Ok(crop(img, top, left, height, width)?)
}

/// PSNR/SSIM of `test` against the matching center region of `reference`.
pub fn evaluate(reference: &Image, test: &Image, data_range: f64) -> AppResult<EvalReport> {
    let (h, w) = test.dims();
    let r = aligned_crop(reference, reference.dims(), h, w)?;
    Ok(EvalReport {
        psnr: psnr(&r, test, data_range)?,
        ssim: ssim(&r, test, data_range)?,
        data_range,
    })
}

/// Largest region every network in `nets` can process on an `h x w` image.
pub fn common_dims(nets: &[NetConfig], h: usize, w: usize) -> (usize, usize) {
    nets.iter().fold((h, w), |(ch, cw), n| {
        let m = n.image_multiple();
        (ch.min(h - h % m), cw.min(w - w % m))
    })
}

pub struct Trained {
    pub clean: Image,
    pub noisy: Image,
    pub model: Model,
    pub log: TrainLog,
}

/// Reference scores of the noisy input and the 3x3 Gaussian blur on a region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    #[serde(with = "decibels")]
    pub noisy_psnr: f64,
    #[serde(with = "decibels")]
    pub blur_psnr: f64,
}

pub fn baselines(clean: &Image, noisy: &Image, dims: (usize, usize), data_range: f64) -> AppResult<Baselines> {
    let n = aligned_crop(noisy, noisy.dims(), dims.0, dims.1)?;
    let b = aligned_crop(&gaussian_blur_3x3(noisy), noisy.dims(), dims.0, dims.1)?;
    Ok(Baselines {
        noisy_psnr: evaluate(clean, &n, data_range)?.psnr,
        blur_psnr: evaluate(clean, &b, data_range)?.psnr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    Stride,
    SamplingStrategy,
    Upsampling,
    MSweep,
}

impl AblationAxis {
    pub fn name(self) -> &'static str {
        match self {
            AblationAxis::Stride => "stride",
            AblationAxis::SamplingStrategy => "sampling_strategy",
            AblationAxis::Upsampling => "upsampling",
            AblationAxis::MSweep => "m_sweep",
        }
    }
}

/// One line of an ablation results table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub axis: AblationAxis,
    pub setting: String,
    pub stride: usize,
    pub strategy: Strategy,
    pub upsampling: Upsampling,
    pub a: f64,
    pub b: f64,
    pub m: usize,
    pub epochs: usize,
    #[serde(with = "decibels")]
    pub psnr: f64,
    pub ssim: f64,
    #[serde(flatten)]
    pub baselines: Baselines,
    pub first_loss: f64,
    pub final_loss: f64,
    pub eval_height: usize,
    pub eval_width: usize,
}

/// Trains configurations on demand, reusing models of identical runs.
#[derive(Default)]
pub struct Runner {
    cache: HashMap<String, Rc<Trained>>,
    /// Print a progress line to stderr every this many epochs (0: silent).
    pub progress_every: usize,
}

impl Runner {
    pub fn new(progress_every: usize) -> Self {
        Self {
            cache: HashMap::new(),
            progress_every,
        }
    }

    fn key(cfg: &ExperimentConfig) -> String {
        serde_json::to_string(&(&cfg.phantom, &cfg.noise, &cfg.noise_seed, &cfg.net, &cfg.train, &cfg.paths.clean, &cfg.paths.input))
            .expect("config serializes")
    }

    pub fn trained(&mut self, cfg: &ExperimentConfig) -> AppResult<Rc<Trained>> {
        let key = Self::key(cfg);
        if let Some(t) = self.cache.get(&key) {
            return Ok(Rc::clone(t));
        }
        cfg.validate()?;
        let clean = clean_image(cfg)?;
        let noisy = noisy_image(cfg, Some(&clean))?;
        let every = self.progress_every;
        let label = format!(
            "s={} {} {} a={} b={}",
            cfg.net.stride,
            strategy_name(cfg.train.sampler.strategy),
            cfg.net.upsampling.name(),
            cfg.noise.a,
            cfg.noise.b
        );
        let mut report = |r: &EpochRecord| {
            if every > 0 && ((r.epoch + 1) % every == 0 || r.epoch == 0) {
                eprintln!("[{label}] epoch {} loss {:.6}", r.epoch + 1, r.loss);
            }
        };
        let clock = SystemClock::default();
        let hooks = TrainHooks {
            clock: Some(&clock),
            reference: (cfg.psnr_every > 0).then_some((&clean, cfg.data_range, cfg.psnr_every)),
            on_epoch: Some(&mut report),
        };
        let (model, log) = train_zero_shot_with(&noisy, &cfg.net, &cfg.train, hooks)?;
        let t = Rc::new(Trained {
            clean,
            noisy,
            model,
            log,
        });
        self.cache.insert(key, Rc::clone(&t));
        Ok(t)
    }

    /// Trains (or reuses) `cfg` and scores its `m`-draw estimate on a
    /// centered `dims` region.
    pub fn row(
        &mut self,
        axis: AblationAxis,
        setting: String,
        cfg: &ExperimentConfig,
        m: usize,
        dims: (usize, usize),
    ) -> AppResult<AblationRow> {
        let t = self.trained(cfg)?;
        let mut mmse = cfg.mmse;
        mmse.draws = m;
        let pred = denoise_mmse(&t.model, &t.noisy, &mmse)?;
        let pred = aligned_crop(&pred, t.noisy.dims(), dims.0, dims.1)?;
        let report = evaluate(&t.clean, &pred, cfg.data_range)?;
        let losses = t.log.losses();
        Ok(AblationRow {
            axis,
            setting,
            stride: cfg.net.stride,
            strategy: cfg.mmse.sampler.strategy,
            upsampling: cfg.net.upsampling,
            a: cfg.noise.a,
            b: cfg.noise.b,
            m,
            epochs: cfg.train.epochs,
            psnr: report.psnr,
            ssim: report.ssim,
            baselines: baselines(&t.clean, &t.noisy, dims, cfg.data_range)?,
            first_loss: losses.first().copied().unwrap_or(f64::NAN),
            final_loss: losses.last().copied().unwrap_or(f64::NAN),
            eval_height: dims.0,
            eval_width: dims.1,
        })
    }

    /// Runs one ablation sweep around `base`, calling `sink` after each row.
    pub fn ablate(
        &mut self,
        base: &ExperimentConfig,
        axis: AblationAxis,
        sink: &mut dyn FnMut(&AblationRow),
    ) -> AppResult<Vec<AblationRow>> {
        base.validate()?;
        let (h, w) = clean_image(base)?.dims();
        let m = base.mmse.draws;
        let plan: Vec<(String, ExperimentConfig, usize)> = match axis {
            AblationAxis::Stride => [2, 3, 4]
                .into_iter()
                .map(|s| {
                    let mut c = base.clone();
                    c.set_stride(s);
                    (format!("stride={s}"), c, m)
                })
                .collect(),
            AblationAxis::SamplingStrategy => base
                .noise_levels
                .iter()
                .flat_map(|&level| {
                    [Strategy::Fixed, Strategy::Random].into_iter().map(move |st| {
                        let mut c = base.clone();
                        c.noise = level;
                        c.set_strategy(st);
                        (format!("{} a={} b={}", strategy_name(st), level.a, level.b), c, m)
                    })
                })
                .collect(),
            AblationAxis::Upsampling => Upsampling::ALL
                .into_iter()
                .map(|u| {
                    let mut c = base.clone();
                    c.set_upsampling(u);
                    (u.name().to_string(), c, m)
                })
                .collect(),
            AblationAxis::MSweep => base
                .m_sweep
                .iter()
                .map(|&m| (format!("m={m}"), base.clone(), m))
                .collect(),
        };
        let nets: Vec<NetConfig> = plan.iter().map(|(_, c, _)| c.net).collect();
        let dims = common_dims(&nets, h, w);
        let mut rows = Vec::with_capacity(plan.len());
        for (setting, cfg, m) in plan {
            cfg.validate()?;
            let row = self.row(axis, setting, &cfg, m, dims)?;
            sink(&row);
            rows.push(row);
        }
        Ok(rows)
    }
}

pub fn strategy_name(s: Strategy) -> &'static str {
    match s {
        Strategy::Random => "random",
        Strategy::Fixed => "fixed",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use zsdn_core::RngSeed;

    #[test]
    fn aligned_crop_matches_direct_center_crop() {
        let full = Image::from_fn(20, 18, |r, c| (r * 18 + c) as f32);
        let inner = zsdn_core::center_crop(&full, 16, 16).unwrap();
        let a = aligned_crop(&inner, full.dims(), 12, 10).unwrap();
        let b = zsdn_core::center_crop(&full, 12, 10).unwrap();
        assert_eq!(a, b);
        assert!(aligned_crop(&inner, full.dims(), 17, 4).is_err());
    }

    #[test]
    fn evaluate_uses_the_center_region() {
        let full = Image::from_fn(16, 16, |r, c| ((r + c) % 3) as f32 / 3.0);
        let inner = zsdn_core::center_crop(&full, 12, 12).unwrap();
        let r = evaluate(&full, &inner, 1.0).unwrap();
        assert_eq!(r.psnr, f64::INFINITY);
        assert_eq!(r.ssim, 1.0);
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"inf\""), "{json}");
        let back: EvalReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn common_dims_takes_the_smallest_crop() {
        let base = NetConfig::default();
        let s3 = NetConfig { stride: 3, ..base };
        assert_eq!(common_dims(&[base], 256, 256), (256, 256));
        assert_eq!(common_dims(&[base, s3], 256, 250), (240, 240));
    }

    #[test]
    fn runner_reuses_identical_runs() {
        let mut cfg = ExperimentConfig::default();
        cfg.phantom = zsdn_core::LatticeSpec::hrem(32, 32, RngSeed(1));
        cfg.net = NetConfig {
            base_channels: 2,
            depth: 1,
            feature_channels: 4,
            ..NetConfig::default()
        };
        cfg.train.patch_size = 16;
        cfg.train.batch_size = 1;
        cfg.train.epochs = 2;
        cfg.mmse.draws = 2;
        cfg.m_sweep = vec![1, 2];
        let mut runner = Runner::default();
        let a = runner.trained(&cfg).unwrap();
        let b = runner.trained(&cfg).unwrap();
        assert!(Rc::ptr_eq(&a, &b));
        let mut n = 0;
        let rows = runner.ablate(&cfg, AblationAxis::MSweep, &mut |_| n += 1).unwrap();
        assert_eq!((rows.len(), n), (2, 2));
        assert_eq!(runner.cache.len(), 1);
        assert!(rows.iter().all(|r| r.eval_height == 32 && r.psnr.is_finite()));
    }
}
