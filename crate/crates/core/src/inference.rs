//! Ensemble restoration: average the network output over many random
//! sub-samplings of the same noisy image.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{center_crop_to_multiple, crop, Image};
use crate::nn::{Model, NetConfig};
use crate::subsample::{subsample, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmseConfig {
    /// Number of sub-sampling draws `M`.
    #[serde(rename = "m")]
    pub draws: usize,
    pub sampler: SamplerConfig,
    /// Full-resolution tile edge for large images; must be a multiple of
    /// `stride * 2^depth`.
    #[serde(default)]
    pub tile: Option<usize>,
}

impl MmseConfig {
    pub fn new(draws: usize, sampler: SamplerConfig) -> Self {
        Self {
            draws,
            sampler,
            tile: None,
        }
    }
}

/// The region of `img` the model can process: a center crop to a multiple
/// of `stride * 2^depth`.
pub fn model_crop(config: &NetConfig, img: &Image) -> Result<Image> {
    center_crop_to_multiple(img, config.image_multiple())
}

fn check_sampler(model: &Model, sampler: &SamplerConfig) -> Result<()> {
    sampler.validate()?;
    if sampler.stride != model.config().stride {
        return Err(Error::InvalidConfig(alloc::format!(
            "sampler stride {} differs from model stride {}",
            sampler.stride,
            model.config().stride
        )));
    }
    Ok(())
}

/// Denoises one random sub-sampling of `noisy` (after [`model_crop`]).
pub fn denoise_once(model: &Model, noisy: &Image, sampler: &SamplerConfig) -> Result<Image> {
    denoise_once_tiled(model, noisy, sampler, None)
}

fn denoise_once_tiled(
    model: &Model,
    noisy: &Image,
    sampler: &SamplerConfig,
    tile: Option<usize>,
) -> Result<Image> {
    check_sampler(model, sampler)?;
    let img = model_crop(model.config(), noisy)?;
    let res = subsample(&img, sampler)?;
    match tile {
        Some(t) if t < img.height().max(img.width()) => forward_tiled(model, &res.sub, t),
        _ => model.forward(&res.sub),
    }
}

/// Runs the network tile by tile over the sub-sampled image. Each tile is
/// evaluated with a context margin that is discarded afterwards.
fn forward_tiled(model: &Model, sub: &Image, tile: usize) -> Result<Image> {
    let cfg = model.config();
    if tile == 0 || tile % cfg.image_multiple() != 0 {
        return Err(Error::InvalidConfig(alloc::format!(
            "tile {tile} must be a positive multiple of {}",
            cfg.image_multiple()
        )));
    }
    let s = cfg.stride;
    let unit = cfg.input_multiple();
    let step = tile / s;
    let margin = 2 * unit.max(8);
    let (h, w) = sub.dims();
    let mut out = Image::zeros(h * s, w * s);
    let mut top = 0;
    while top < h {
        let th = step.min(h - top);
        let r0 = top.saturating_sub(margin);
        let r1 = (top + th + margin).min(h);
        let mut left = 0;
        while left < w {
            let tw = step.min(w - left);
            let c0 = left.saturating_sub(margin);
            let c1 = (left + tw + margin).min(w);
            let piece = crop(sub, r0, c0, r1 - r0, c1 - c0)?;
            let pred = model.forward(&piece)?;
            for r in 0..th * s {
                let src = pred.row((top - r0) * s + r);
                let from = (left - c0) * s;
                let dst_row = (top * s + r) * w * s;
                out.data_mut()[dst_row + left * s..dst_row + (left + tw) * s]
                    .copy_from_slice(&src[from..from + tw * s]);
            }
            left += tw;
        }
        top += th;
    }
    Ok(out)
}

/// Individual draws of the ensemble; draw `i` uses `sampler.seed.derive(i)`.
pub fn denoise_draws(model: &Model, noisy: &Image, cfg: &MmseConfig) -> Result<Vec<Image>> {
    if cfg.draws == 0 {
        return Err(Error::InvalidConfig("M must be at least 1".into()));
    }
    (0..cfg.draws)
        .map(|i| {
            let sampler = cfg.sampler.with_seed(cfg.sampler.seed.derive(i as u64));
            denoise_once_tiled(model, noisy, &sampler, cfg.tile)
        })
        .collect()
}

/// Mean of `M` draws, accumulated in f64 in draw order.
pub fn denoise_mmse(model: &Model, noisy: &Image, cfg: &MmseConfig) -> Result<Image> {
    let mut acc = MmseAccumulator::default();
    if cfg.draws == 0 {
        return Err(Error::InvalidConfig("M must be at least 1".into()));
    }
    for i in 0..cfg.draws {
        let sampler = cfg.sampler.with_seed(cfg.sampler.seed.derive(i as u64));
        acc.push(&denoise_once_tiled(model, noisy, &sampler, cfg.tile)?)?;
    }
    acc.mean()
}

/// Running f64 sum of equally sized images.
#[derive(Debug, Clone, Default)]
pub struct MmseAccumulator {
    dims: (usize, usize),
    sum: Vec<f64>,
    count: usize,
}

impl MmseAccumulator {
    pub fn push(&mut self, img: &Image) -> Result<()> {
        if self.count == 0 {
            self.dims = img.dims();
            self.sum = vec![0.0; img.data().len()];
        } else if self.dims != img.dims() {
            return Err(Error::DimensionMismatch(
                self.dims.0,
                self.dims.1,
                img.height(),
                img.width(),
            ));
        }
        for (s, &v) in self.sum.iter_mut().zip(img.data()) {
            *s += v as f64;
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn mean(&self) -> Result<Image> {
        if self.count == 0 {
            return Err(Error::InvalidConfig("no draws accumulated".into()));
        }
        let n = self.count as f64;
        Image::new(
            self.dims.0,
            self.dims.1,
            self.sum.iter().map(|&s| (s / n) as f32).collect(),
        )
    }
}
