//! Mixed Poisson-Gaussian corruption and SNR.
//!
//! A clean intensity `x` is observed as `a * Poisson(x / a) + N(0, b²)`, which
//! has mean `x` and variance `a x + b²`. The Poisson draw is exact (inversion
//! for small rates, transformed rejection for large ones), never a Gaussian
//! surrogate. Outputs are not clipped.

use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    /// Signal-dependent gain.
    pub a: f64,
    /// Standard deviation of the signal-independent read noise.
    pub b: f64,
}

impl NoiseParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let p = Self { a, b };
        p.validate()?;
        Ok(p)
    }

    fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite()) || self.a < 0.0 || self.b < 0.0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "noise parameters must be finite and nonnegative, got a={} b={}",
                self.a,
                self.b
            )));
        }
        Ok(())
    }

    /// Rejects the noiseless pair, which is not a corruption.
    pub fn validate_corruption(&self) -> Result<()> {
        self.validate()?;
        if self.a == 0.0 && self.b == 0.0 {
            return Err(Error::InvalidConfig("a and b are both zero".into()));
        }
        Ok(())
    }

    /// `a x + b²`.
    pub fn variance_at(&self, x: f64) -> f64 {
        self.a * x + self.b * self.b
    }
}

/// Mean and variance of one noisy observation of intensity `x`.
pub fn theoretical_moments(x: f64, params: NoiseParams) -> Result<(f64, f64)> {
    params.validate()?;
    if params.a > 0.0 && x < 0.0 {
        return Err(Error::NegativeIntensity {
            value: x as f32,
            index: 0,
        });
    }
    Ok((x, params.variance_at(x)))
}

/// Corrupts `img` under `params`. Identical `(img, params, seed)` give
/// bit-identical results.
pub fn corrupt(img: &Image, params: NoiseParams, seed: RngSeed) -> Result<Image> {
    params.validate_corruption()?;
    if params.a > 0.0 {
        if let Some((index, &value)) = img.data().iter().enumerate().find(|(_, v)| **v < 0.0) {
            return Err(Error::NegativeIntensity { value, index });
        }
    }
    let mut rng = seed.rng();
    let mut out = img.clone();
    for v in out.data_mut() {
        *v = sample_pixel(*v as f64, params, &mut rng) as f32;
    }
    Ok(out)
}

fn sample_pixel<R: Rng + ?Sized>(x: f64, params: NoiseParams, rng: &mut R) -> f64 {
    let shot = if params.a > 0.0 {
        let rate = x / params.a;
        if rate > 0.0 {
            let counts: f64 = Poisson::new(rate)
                .expect("finite positive Poisson rate")
                .sample(rng);
            params.a * counts
        } else {
            0.0
        }
    } else {
        x
    };
    if params.b > 0.0 {
        let z: f64 = StandardNormal.sample(rng);
        shot + params.b * z
    } else {
        shot
    }
}

/// `10 log10(mean(clean²) / mean((noisy - clean)²))`; `+inf` for a noiseless input.
pub fn snr_db(clean: &Image, noisy: &Image) -> Result<f64> {
    clean.ensure_same_dims(noisy)?;
    let (signal, noise) = clean
        .data()
        .iter()
        .zip(noisy.data())
        .fold((0.0f64, 0.0f64), |(s, n), (&c, &y)| {
            let d = y as f64 - c as f64;
            (s + (c as f64) * (c as f64), n + d * d)
        });
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * Float::log10(signal / noise))
}
