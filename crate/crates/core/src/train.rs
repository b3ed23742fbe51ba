//! Zero-shot training on a single noisy image, and an empirical check of
//! the masked-loss decomposition.
//!
//! Each step draws `batch_size` random crops, sub-samples each with fresh
//! randomness, predicts the full-resolution crop from the sub-sampled one
//! and penalizes the squared error on the held-out (mask = 1) pixels only.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::bilinear_upsample;
use crate::image::{crop_patch, Image};
use crate::inference::denoise_once;
use crate::metrics::psnr;
use crate::nn::{image_to_tensor, Gradients, Model, NetConfig, Tensor};
use crate::noise::{corrupt, NoiseParams};
use crate::optim::{Adam, AdamConfig};
use crate::rng::RngSeed;
use crate::subsample::{check_binary, subsample, SamplerConfig};

/// Loss above which a run is considered diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub patch_size: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub iters_per_epoch: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub sampler: SamplerConfig,
    pub seed: RngSeed,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            patch_size: 128,
            batch_size: 12,
            epochs: 300,
            iters_per_epoch: 1,
            lr: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            sampler: SamplerConfig::random(2, RngSeed(0)),
            seed: RngSeed(0),
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn validate(&self, net: &NetConfig) -> Result<()> {
        net.validate()?;
        self.sampler.validate()?;
        let bad = |m: alloc::string::String| Err(Error::InvalidConfig(m));
        if self.sampler.stride != net.stride {
            return bad(alloc::format!(
                "sampler stride {} differs from network stride {}",
                self.sampler.stride,
                net.stride
            ));
        }
        if self.patch_size == 0 || self.patch_size % net.image_multiple() != 0 {
            return bad(alloc::format!(
                "patch size {} must be a multiple of stride * 2^depth = {}",
                self.patch_size,
                net.image_multiple()
            ));
        }
        if self.batch_size == 0 || self.iters_per_epoch == 0 {
            return bad("batch size and iterations per epoch must be positive".into());
        }
        if !(self.lr > 0.0) {
            return bad("learning rate must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psnr: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss).collect()
    }
}

/// Wall-clock source; the core has no clock of its own.
pub trait Clock {
    fn now_seconds(&self) -> f64;
}

/// Optional instrumentation for [`train_zero_shot_with`].
#[derive(Default)]
pub struct TrainHooks<'a> {
    pub clock: Option<&'a dyn Clock>,
    /// Ground truth, PSNR data range, and the evaluation period in epochs.
    pub reference: Option<(&'a Image, f64, usize)>,
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochRecord)>,
}

/// Mean squared error over mask-1 pixels.
pub fn masked_loss(pred: &Image, noisy: &Image, mask: &Image) -> Result<f64> {
    pred.ensure_same_dims(noisy)?;
    pred.ensure_same_dims(mask)?;
    check_binary(mask)?;
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for ((&p, &y), &m) in pred.data().iter().zip(noisy.data()).zip(mask.data()) {
        if m == 1.0 {
            let d = p as f64 - y as f64;
            sum += d * d;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / count as f64)
}

pub fn train_zero_shot(
    noisy: &Image,
    net_cfg: &NetConfig,
    cfg: &TrainConfig,
) -> Result<(Model, TrainLog)> {
    train_zero_shot_with(noisy, net_cfg, cfg, TrainHooks::default())
}

/// Initializes a model from `cfg.seed` and trains it on `noisy`.
pub fn train_zero_shot_with(
    noisy: &Image,
    net_cfg: &NetConfig,
    cfg: &TrainConfig,
    hooks: TrainHooks<'_>,
) -> Result<(Model, TrainLog)> {
    cfg.validate(net_cfg)?;
    let model = Model::init(*net_cfg, cfg.seed.derive(u64::MAX))?;
    train_from(model, noisy, cfg, hooks)
}

/// Trains an existing model in place of a fresh one.
pub fn train_from(
    mut model: Model,
    noisy: &Image,
    cfg: &TrainConfig,
    mut hooks: TrainHooks<'_>,
) -> Result<(Model, TrainLog)> {
    cfg.validate(model.config())?;
    if noisy.height() < cfg.patch_size || noisy.width() < cfg.patch_size {
        return Err(Error::TooSmall {
            height: noisy.height(),
            width: noisy.width(),
            window: cfg.patch_size,
        });
    }
    let mut adam = Adam::new(cfg.adam(), &model);
    let mut log = TrainLog::default();
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let start = hooks.clock.map(|c| c.now_seconds());
        let mut epoch_loss = 0.0;
        for _ in 0..cfg.iters_per_epoch {
            let (loss, grads) = batch_gradient(&model, noisy, cfg, cfg.seed.derive(step))?;
            if !loss.is_finite() || loss > DIVERGENCE_LIMIT {
                return Err(Error::Diverged { epoch, loss });
            }
            adam.step(&mut model, &grads);
            epoch_loss += loss;
            step += 1;
        }
        let psnr = match hooks.reference {
            Some((clean, range, every)) if every > 0 && (epoch + 1) % every == 0 => {
                let sampler = cfg.sampler.with_seed(cfg.seed.derive(u64::MAX - 1));
                let pred = denoise_once(&model, noisy, &sampler)?;
                let clean = crate::inference::model_crop(model.config(), clean)?;
                Some(psnr(&clean, &pred, range)?)
            }
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            loss: epoch_loss / cfg.iters_per_epoch as f64,
            seconds: match (hooks.clock, start) {
                (Some(c), Some(t0)) => c.now_seconds() - t0,
                _ => 0.0,
            },
            psnr,
        };
        if let Some(cb) = hooks.on_epoch.as_mut() {
            cb(&record);
        }
        log.epochs.push(record);
    }
    Ok((model, log))
}

/// Batch-mean masked loss and its gradient for one optimizer step.
fn batch_gradient(
    model: &Model,
    noisy: &Image,
    cfg: &TrainConfig,
    step_seed: RngSeed,
) -> Result<(f64, Gradients)> {
    let mut rng = step_seed.rng();
    let p = cfg.patch_size;
    let mut total = Gradients::zeros_like(model);
    let mut loss = 0.0;
    let batch = cfg.batch_size as f64;
    for _ in 0..cfg.batch_size {
        let top = rng.random_range(0..=noisy.height() - p);
        let left = rng.random_range(0..=noisy.width() - p);
        let patch = crop_patch(noisy, top, left, p)?;
        let sampler = cfg.sampler.with_seed(RngSeed(rng.random()));
        let res = subsample(&patch, &sampler)?;
        let (out, tape) = model.forward_tensor(image_to_tensor(&res.sub))?;
        let count = res.mask.data().iter().filter(|&&m| m == 1.0).count() as f64;
        let mut sq = 0.0f64;
        let grad: Vec<f32> = out
            .data
            .iter()
            .zip(patch.data())
            .zip(res.mask.data())
            .map(|((&o, &y), &m)| {
                let d = (o - y) * m;
                sq += (d as f64) * (d as f64);
                (2.0 * d as f64 / (count * batch)) as f32
            })
            .collect();
        loss += sq / count;
        let g = model.backward_tape(&tape, Tensor::from_vec(1, out.height, out.width, grad));
        total.add_assign(&g);
    }
    Ok((loss / batch, total))
}

/// A fixed map from a sub-sampled image to a full-resolution estimate.
pub trait SubsampleDenoiser {
    fn restore(&self, sub: &Image, stride: usize) -> Result<Image>;
}

impl SubsampleDenoiser for Model {
    fn restore(&self, sub: &Image, stride: usize) -> Result<Image> {
        if stride != self.config().stride {
            return Err(Error::InvalidConfig(alloc::format!(
                "model stride {} cannot restore stride {stride}",
                self.config().stride
            )));
        }
        self.forward(sub)
    }
}

/// Parameter-free bilinear interpolation of the sub-sampled image.
#[derive(Debug, Clone, Copy, Default)]
pub struct BilinearUpsampler;

impl SubsampleDenoiser for BilinearUpsampler {
    fn restore(&self, sub: &Image, stride: usize) -> Result<Image> {
        bilinear_upsample(sub, stride)
    }
}

/// Predicts zero everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser;

impl SubsampleDenoiser for ZeroDenoiser {
    fn restore(&self, sub: &Image, stride: usize) -> Result<Image> {
        Ok(Image::zeros(sub.height() * stride, sub.width() * stride))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossDecomposition {
    /// Mean self-supervised loss against the noisy held-out pixels.
    pub lhs: f64,
    /// Mean supervised loss against the clean held-out pixels plus the mean
    /// noise variance there.
    pub rhs: f64,
    /// The supervised part of `rhs`.
    pub supervised: f64,
    pub noise_variance: f64,
}

impl LossDecomposition {
    pub fn relative_gap(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.rhs
    }
}

/// Monte-Carlo comparison of the self-supervised masked loss with the
/// supervised loss plus noise variance, over fresh noise and sub-samplings.
pub fn loss_decomposition_check(
    denoiser: &dyn SubsampleDenoiser,
    clean: &Image,
    params: NoiseParams,
    sampler: &SamplerConfig,
    trials: usize,
    seed: RngSeed,
) -> Result<LossDecomposition> {
    if trials == 0 {
        return Err(Error::InvalidConfig("need at least one trial".into()));
    }
    let noiseless = params.a == 0.0 && params.b == 0.0;
    let (mut lhs, mut sup, mut var) = (0.0, 0.0, 0.0);
    for t in 0..trials as u64 {
        let noisy = if noiseless {
            clean.clone()
        } else {
            corrupt(clean, params, seed.derive(2 * t))?
        };
        let res = subsample(&noisy, &sampler.with_seed(seed.derive(2 * t + 1)))?;
        let pred = denoiser.restore(&res.sub, sampler.stride)?;
        pred.ensure_same_dims(&noisy)?;
        let (mut l, mut s, mut v, mut n) = (0.0, 0.0, 0.0, 0usize);
        for (((&p, &y), &x), &m) in pred
            .data()
            .iter()
            .zip(noisy.data())
            .zip(clean.data())
            .zip(res.mask.data())
        {
            if m == 1.0 {
                let (p, y, x) = (p as f64, y as f64, x as f64);
                l += (p - y) * (p - y);
                s += (p - x) * (p - x);
                v += params.variance_at(x);
                n += 1;
            }
        }
        let n = n as f64;
        lhs += l / n;
        sup += s / n;
        var += v / n;
    }
    let k = trials as f64;
    Ok(LossDecomposition {
        lhs: lhs / k,
        rhs: (sup + var) / k,
        supervised: sup / k,
        noise_variance: var / k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_examples() {
        let y = Image::from_fn(4, 4, |r, c| (r * 4 + c) as f32 * 0.1);
        let res = subsample(&y, &SamplerConfig::random(2, RngSeed(2))).unwrap();
        assert_eq!(masked_loss(&y, &y, &res.mask).unwrap(), 0.0);
        let shifted = y.map(|v| v + 1.0);
        assert!((masked_loss(&shifted, &y, &res.mask).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(
            masked_loss(&y, &y, &Image::zeros(4, 4)).unwrap_err(),
            Error::EmptyMask
        );
        assert!(masked_loss(&y, &y, &Image::filled(4, 4, 2.0)).is_err());
    }

    #[test]
    fn loss_ignores_sampled_pixels() {
        let y = Image::from_fn(6, 6, |r, c| (r + 2 * c) as f32 * 0.05);
        let res = subsample(&y, &SamplerConfig::random(3, RngSeed(4))).unwrap();
        let pred = y.map(|v| v * 0.5);
        let base = masked_loss(&pred, &y, &res.mask).unwrap();
        let mut edited = pred.clone();
        for (v, &m) in edited.data_mut().iter_mut().zip(res.mask.data()) {
            if m == 0.0 {
                *v += 100.0;
            }
        }
        assert_eq!(masked_loss(&edited, &y, &res.mask).unwrap(), base);
    }

    #[test]
    fn config_validation() {
        let net = NetConfig::default();
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate(&net).is_ok());
        cfg.patch_size = 120;
        assert!(cfg.validate(&net).is_err());
        cfg.patch_size = 128;
        cfg.sampler.stride = 4;
        assert!(cfg.validate(&net).is_err());
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let net = NetConfig {
            base_channels: 4,
            depth: 1,
            feature_channels: 8,
            ..NetConfig::default()
        };
        let cfg = TrainConfig {
            patch_size: 8,
            epochs: 0,
            ..TrainConfig::default()
        };
        let noisy = Image::filled(8, 8, 0.5);
        let (model, log) = train_zero_shot(&noisy, &net, &cfg).unwrap();
        assert_eq!(model, Model::init(net, cfg.seed.derive(u64::MAX)).unwrap());
        assert!(log.epochs.is_empty());
    }

    #[test]
    fn noiseless_decomposition_is_exact() {
        let clean = Image::from_fn(8, 8, |r, c| ((r * c) % 5) as f32 / 5.0);
        let d = loss_decomposition_check(
            &BilinearUpsampler,
            &clean,
            NoiseParams { a: 0.0, b: 0.0 },
            &SamplerConfig::random(2, RngSeed(0)),
            10,
            RngSeed(1),
        )
        .unwrap();
        assert_eq!(d.lhs, d.rhs);
        assert_eq!(d.noise_variance, 0.0);
    }
}
