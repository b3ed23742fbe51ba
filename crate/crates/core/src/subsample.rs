//! Random sub-sampling of a noisy image into a low-resolution input and the
//! mask of pixels left out of it.
//!
//! The image is viewed as a grid of `s x s` blocks. One position per block is
//! selected; the selected pixels form the sub-sampled image and the mask is 0
//! there and 1 everywhere else.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{check_divisible, Image};
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Uniform, independent choice per block.
    Random,
    /// The same block position everywhere (plain decimation).
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub stride: usize,
    pub strategy: Strategy,
    /// Block position used by [`Strategy::Fixed`], row-major within the block.
    #[serde(default)]
    pub fixed_offset: usize,
    pub seed: RngSeed,
}

impl SamplerConfig {
    pub fn random(stride: usize, seed: RngSeed) -> Self {
        Self {
            stride,
            strategy: Strategy::Random,
            fixed_offset: 0,
            seed,
        }
    }

    pub fn fixed(stride: usize, fixed_offset: usize) -> Self {
        Self {
            stride,
            strategy: Strategy::Fixed,
            fixed_offset,
            seed: RngSeed(0),
        }
    }

    pub fn with_seed(self, seed: RngSeed) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride < 2 {
            return Err(Error::InvalidConfig(alloc::format!(
                "stride must be at least 2, got {}",
                self.stride
            )));
        }
        if self.fixed_offset >= self.stride * self.stride {
            return Err(Error::InvalidConfig(alloc::format!(
                "fixed offset {} outside [0, {})",
                self.fixed_offset,
                self.stride * self.stride
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubsampleResult {
    pub stride: usize,
    /// Selected pixels, one per block.
    pub sub: Image,
    /// Full resolution; 1 where the pixel was not selected.
    pub mask: Image,
    /// Chosen block position per block, row-major over blocks.
    pub selection: Vec<u16>,
}

impl SubsampleResult {
    /// Full-resolution coordinates of the pixel selected in block `(i, j)`.
    #[inline]
    pub fn selected_position(&self, i: usize, j: usize) -> (usize, usize) {
        let k = self.selection[i * self.sub.width() + j] as usize;
        (i * self.stride + k / self.stride, j * self.stride + k % self.stride)
    }
}

pub fn subsample(img: &Image, cfg: &SamplerConfig) -> Result<SubsampleResult> {
    cfg.validate()?;
    let s = cfg.stride;
    check_divisible(img.height(), img.width(), s)?;
    let (bh, bw) = (img.height() / s, img.width() / s);
    let selection: Vec<u16> = match cfg.strategy {
        Strategy::Fixed => vec![cfg.fixed_offset as u16; bh * bw],
        Strategy::Random => {
            let mut rng = cfg.seed.rng();
            let n = (s * s) as u16;
            (0..bh * bw).map(|_| rng.random_range(0..n)).collect()
        }
    };
    let mut mask = Image::filled(img.height(), img.width(), 1.0);
    let mut sub = Vec::with_capacity(bh * bw);
    for i in 0..bh {
        for j in 0..bw {
            let k = selection[i * bw + j] as usize;
            let (r, c) = (i * s + k / s, j * s + k % s);
            sub.push(img.get(r, c));
            mask.set(r, c, 0.0);
        }
    }
    Ok(SubsampleResult {
        stride: s,
        sub: Image::new(bh, bw, sub)?,
        mask,
        selection,
    })
}

/// Hadamard product with a binary mask.
pub fn apply_mask(img: &Image, mask: &Image) -> Result<Image> {
    img.ensure_same_dims(mask)?;
    check_binary(mask)?;
    let data = img
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| v * m)
        .collect();
    Image::new(img.height(), img.width(), data)
}

pub(crate) fn check_binary(mask: &Image) -> Result<()> {
    match mask
        .data()
        .iter()
        .enumerate()
        .find(|(_, &m)| m != 0.0 && m != 1.0)
    {
        Some((index, &value)) => Err(Error::NonBinaryMask { value, index }),
        None => Ok(()),
    }
}

/// `count` independent sub-samplings; draw `i` uses `cfg.seed.derive(i)`.
pub fn resample_set(img: &Image, cfg: &SamplerConfig, count: usize) -> Result<Vec<SubsampleResult>> {
    if count == 0 {
        return Err(Error::InvalidConfig("need at least one draw".into()));
    }
    (0..count)
        .map(|i| subsample(img, &cfg.with_seed(cfg.seed.derive(i as u64))))
        .collect()
}
