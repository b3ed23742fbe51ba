//! Full-reference quality metrics and simple image probes.

use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Axis, Error, Result};
use crate::image::Image;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// dB; `+inf` when the images are identical (serialized as `"inf"`).
    #[serde(with = "decibels")]
    pub psnr: f64,
    pub ssim: f64,
    pub data_range: f64,
}

/// Serde adapter writing non-finite decibel values as `"inf"` / `"-inf"`.
pub mod decibels {
    use serde::de::{self, Deserializer, Visitor};
    use serde::Serializer;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else if *v < 0.0 {
            s.serialize_str("-inf")
        } else {
            s.serialize_str("nan")
        }
    }

    struct Db;

    impl Visitor<'_> for Db {
        type Value = f64;

        fn expecting(&self, f: &mut core::fmt::Formatter) -> core::fmt::Result {
            f.write_str("a number or \"inf\"")
        }

        fn visit_f64<E: de::Error>(self, v: f64) -> Result<f64, E> {
            Ok(v)
        }

        fn visit_i64<E: de::Error>(self, v: i64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_u64<E: de::Error>(self, v: u64) -> Result<f64, E> {
            Ok(v as f64)
        }

        fn visit_str<E: de::Error>(self, v: &str) -> Result<f64, E> {
            match v {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
            }
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        d.deserialize_any(Db)
    }
}

pub fn mse(reference: &Image, test: &Image) -> Result<f64> {
    reference.ensure_same_dims(test)?;
    let sum: f64 = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    Ok(sum / reference.data().len() as f64)
}

/// `10 log10(range² / MSE)`, `+inf` when MSE is zero.
pub fn psnr(reference: &Image, test: &Image, data_range: f64) -> Result<f64> {
    check_range(data_range)?;
    let e = mse(reference, test)?;
    if e == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * Float::log10(data_range * data_range / e))
}

fn check_range(data_range: f64) -> Result<()> {
    if !(data_range > 0.0 && data_range.is_finite()) {
        return Err(Error::InvalidConfig(alloc::format!(
            "data range must be positive, got {data_range}"
        )));
    }
    Ok(())
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = Float::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA));
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Valid-mode separable filtering of an `h x w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, k: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut tmp: Vec<f64> = Vec::with_capacity(h * ow);
    for r in 0..h {
        let row = &plane[r * w..(r + 1) * w];
        for c in 0..ow {
            tmp.push(row[c..c + SSIM_WINDOW].iter().zip(k).map(|(a, b)| a * b).sum());
        }
    }
    let mut out = Vec::with_capacity(oh * ow);
    for r in 0..oh {
        for c in 0..ow {
            out.push((0..SSIM_WINDOW).map(|i| tmp[(r + i) * ow + c] * k[i]).sum());
        }
    }
    out
}

/// Mean SSIM over all fully contained 11x11 Gaussian windows (σ = 1.5,
/// K1 = 0.01, K2 = 0.03).
pub fn ssim(reference: &Image, test: &Image, data_range: f64) -> Result<f64> {
    check_range(data_range)?;
    reference.ensure_same_dims(test)?;
    let (h, w) = reference.dims();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::TooSmall {
            height: h,
            width: w,
            window: SSIM_WINDOW,
        });
    }
    if reference == test {
        return Ok(1.0);
    }
    let x: Vec<f64> = reference.data().iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = test.data().iter().map(|&v| v as f64).collect();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a * b).collect();
    let k = gaussian_window();
    let [mx, my, sxx, syy, sxy] = [&x, &y, &xx, &yy, &xy].map(|p| filter_valid(p, h, w, &k));
    let c1 = Float::powi(SSIM_K1 * data_range, 2);
    let c2 = Float::powi(SSIM_K2 * data_range, 2);
    let n = mx.len();
    let total: f64 = (0..n)
        .map(|i| {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            ((2.0 * ux * uy + c1) * (2.0 * cov + c2))
                / ((ux * ux + uy * uy + c1) * (vx + vy + c2))
        })
        .sum();
    Ok((total / n as f64).clamp(-1.0, 1.0))
}

pub fn evaluate(reference: &Image, test: &Image, data_range: f64) -> Result<EvalReport> {
    Ok(EvalReport {
        psnr: psnr(reference, test, data_range)?,
        ssim: ssim(reference, test, data_range)?,
        data_range,
    })
}

/// `|reference - test|` per pixel.
pub fn error_map(reference: &Image, test: &Image) -> Result<Image> {
    reference.ensure_same_dims(test)?;
    let data = reference
        .data()
        .iter()
        .zip(test.data())
        .map(|(&a, &b)| (a - b).abs())
        .collect();
    Image::new(reference.height(), reference.width(), data)
}

/// Values along one row or column.
pub fn line_profile(img: &Image, axis: Axis, index: usize) -> Result<Vec<f32>> {
    let extent = match axis {
        Axis::Row => img.height(),
        Axis::Col => img.width(),
    };
    if index >= extent {
        return Err(Error::IndexOutOfRange {
            axis,
            index,
            extent,
        });
    }
    Ok(match axis {
        Axis::Row => img.row(index).to_vec(),
        Axis::Col => (0..img.height()).map(|r| img.get(r, index)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn psnr_examples() {
        let a = Image::filled(4, 4, 0.3);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        let z = Image::zeros(4, 4);
        let t = Image::filled(4, 4, 0.1);
        assert!((psnr(&z, &t, 1.0).unwrap() - 20.0).abs() < 1e-5);
        assert_eq!(psnr(&z, &t, 1.0).unwrap(), psnr(&t, &z, 1.0).unwrap());
        assert!(psnr(&z, &t, 0.0).is_err());
        assert!(psnr(&z, &Image::zeros(4, 5), 1.0).is_err());
    }

    #[test]
    fn ssim_identity_and_anticorrelation() {
        let img = Image::from_fn(16, 16, |r, c| ((r / 2 + c / 3) % 2) as f32);
        assert_eq!(ssim(&img, &img, 1.0).unwrap(), 1.0);
        let inv = img.map(|v| 1.0 - v);
        assert!(ssim(&img, &inv, 1.0).unwrap() < 0.0);
        assert!(matches!(
            ssim(&Image::zeros(10, 20), &Image::zeros(10, 20), 1.0),
            Err(Error::TooSmall { .. })
        ));
    }

    #[test]
    fn error_map_examples() {
        let a = Image::from_fn(3, 3, |r, c| (r * 3 + c) as f32);
        assert_eq!(error_map(&a, &a).unwrap(), Image::zeros(3, 3));
        let b = a.map(|v| v - 0.5);
        assert!(error_map(&a, &b).unwrap().data().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn profiles() {
        let img = Image::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(line_profile(&img, Axis::Row, 0).unwrap(), vec![1.0, 2.0]);
        assert_eq!(line_profile(&img, Axis::Col, 1).unwrap(), vec![2.0, 4.0]);
        assert!(line_profile(&img, Axis::Row, 2).is_err());
        let flat = Image::filled(3, 5, 0.7);
        assert!(line_profile(&flat, Axis::Col, 4).unwrap().iter().all(|&v| v == 0.7));
    }
}
