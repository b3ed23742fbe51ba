//! Image files: a lossless raw container and grayscale PNG.
//!
//! The raw container is `name.f32` holding `height * width` little-endian
//! `f32` values in row-major order, next to a JSON sidecar `name.f32.json`
//! with `{height, width, dtype, data_range}`.

use std::fs;
use std::path::{Path, PathBuf};

use image::{ImageBuffer, Luma};
use serde::{Deserialize, Serialize};
use zsdn_core::Image;

use crate::error::{AppError, AppResult};

pub const RAW_DTYPE: &str = "f32le";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawHeader {
    pub height: usize,
    pub width: usize,
    pub dtype: String,
    pub data_range: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Raw,
    Png,
}

/// Format implied by the file extension; `.png` writes 16-bit.
pub fn format_for(path: &Path) -> AppResult<Format> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
        Some(ext) if ext == "f32" || ext == "raw" => Ok(Format::Raw),
        Some(ext) if ext == "png" => Ok(Format::Png),
        _ => Err(AppError::format(path, "unsupported image format (use .f32, .raw or .png)")),
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

pub fn save_image(img: &Image, path: &Path, data_range: f64) -> AppResult<()> {
    match format_for(path)? {
        Format::Raw => save_raw(img, path, data_range),
        Format::Png => save_png(img, path, 16, data_range),
    }
}

pub fn load_image(path: &Path) -> AppResult<Image> {
    match format_for(path)? {
        Format::Raw => load_raw(path).map(|(img, _)| img),
        Format::Png => load_png(path),
    }
}

pub fn save_raw(img: &Image, path: &Path, data_range: f64) -> AppResult<()> {
    let bytes: Vec<u8> = img.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| AppError::io(path, e))?;
    let header = RawHeader {
        height: img.height(),
        width: img.width(),
        dtype: RAW_DTYPE.into(),
        data_range,
    };
    write_json(&sidecar_path(path), &header)
}

pub fn load_raw(path: &Path) -> AppResult<(Image, RawHeader)> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| AppError::io(&side, e))?;
    let header: RawHeader = serde_json::from_str(&text).map_err(|e| AppError::Json {
        path: side.clone(),
        source: e,
    })?;
    if header.dtype != RAW_DTYPE {
        return Err(AppError::format(&side, format!("unsupported dtype {:?}", header.dtype)));
    }
    let expected = header
        .height
        .checked_mul(header.width)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| AppError::format(&side, "image dimensions overflow"))?;
    let bytes = fs::read(path).map_err(|e| AppError::io(path, e))?;
    if bytes.len() != expected {
        return Err(AppError::format(
            path,
            format!(
                "expected {expected} bytes for {}x{}, found {}",
                header.height,
                header.width,
                bytes.len()
            ),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let img = Image::new(header.height, header.width, data)?;
    Ok((img, header))
}

/// Integer code for `v` in `[0, range]` at the given bit depth, clamped.
pub fn quantize(v: f32, data_range: f64, bits: u8) -> u16 {
    let max = ((1u32 << bits) - 1) as f64;
    let x = (v as f64 / data_range).clamp(0.0, 1.0);
    (x * max).round() as u16
}

pub fn save_png(img: &Image, path: &Path, bits: u8, data_range: f64) -> AppResult<()> {
    if !(data_range > 0.0) {
        return Err(AppError::Config(format!("PNG data range must be positive, got {data_range}")));
    }
    let (w, h) = (img.width() as u32, img.height() as u32);
    let res = match bits {
        8 => {
            let px: Vec<u8> = img.data().iter().map(|&v| quantize(v, data_range, 8) as u8).collect();
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, px)
                .expect("buffer length matches dimensions")
                .save(path)
        }
        16 => {
            let px: Vec<u16> = img.data().iter().map(|&v| quantize(v, data_range, 16)).collect();
            ImageBuffer::<Luma<u16>, _>::from_raw(w, h, px)
                .expect("buffer length matches dimensions")
                .save(path)
        }
        _ => return Err(AppError::Config(format!("PNG bit depth must be 8 or 16, got {bits}"))),
    };
    res.map_err(|e| AppError::Image {
        path: path.into(),
        source: e,
    })
}

/// Reads any PNG as grayscale in `[0, 1]`; colour images are converted to luma.
pub fn load_png(path: &Path) -> AppResult<Image> {
    let dynamic = image::open(path).map_err(|e| AppError::Image {
        path: path.into(),
        source: e,
    })?;
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    let data: Vec<f32> = match dynamic {
        image::DynamicImage::ImageLuma8(b) => b.into_raw().into_iter().map(|v| v as f32 / 255.0).collect(),
        other => other
            .into_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f32 / 65535.0)
            .collect(),
    };
    Ok(Image::new(h, w, data)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::Json {
        path: path.into(),
        source: e,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::Json {
        path: path.into(),
        source: e,
    })
}

/// Writes one compact JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> AppResult<()> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row).map_err(|e| AppError::Json {
            path: path.into(),
            source: e,
        })?);
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| AppError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_by_extension() {
        assert_eq!(format_for(Path::new("a.f32")).unwrap(), Format::Raw);
        assert_eq!(format_for(Path::new("a.PNG")).unwrap(), Format::Png);
        assert!(format_for(Path::new("a.tif")).is_err());
        assert!(format_for(Path::new("noext")).is_err());
        assert_eq!(sidecar_path(Path::new("d/x.f32")), PathBuf::from("d/x.f32.json"));
    }

    #[test]
    fn quantization_examples() {
        assert_eq!(quantize(0.5, 1.0, 16), 32768);
        assert_eq!(quantize(0.0, 1.0, 16), 0);
        assert_eq!(quantize(1.0, 1.0, 16), 65535);
        assert_eq!(quantize(2.0, 1.0, 8), 255);
        assert_eq!(quantize(-0.3, 1.0, 8), 0);
        assert_eq!(quantize(0.5, 2.0, 8), 64);
    }
}
