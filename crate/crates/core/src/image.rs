//! Image containers and the lossless space-to-channel rearrangements.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Axis, Error, Result};

/// Single-channel image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(Error::InvalidConfig(alloc::format!(
                "image {height}x{width} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        assert!(height > 0 && width > 0, "empty image");
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        assert!(height > 0 && width > 0, "empty image");
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f32) {
        self.data[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_same_dims(&self, other: &Image) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(
                self.height,
                self.width,
                other.height,
                other.width,
            ));
        }
        Ok(())
    }
}

/// `channels` planes of `height x width`, stored plane after plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelStack {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl ChannelStack {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 || data.len() != height * width * channels {
            return Err(Error::InvalidConfig(alloc::format!(
                "stack {height}x{width}x{channels} cannot hold {} values",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, channel: usize, row: usize, col: usize) -> f32 {
        self.data[(channel * self.height + row) * self.width + col]
    }

    pub fn channel(&self, channel: usize) -> &[f32] {
        let plane = self.height * self.width;
        &self.data[channel * plane..(channel + 1) * plane]
    }
}

pub(crate) fn check_divisible(height: usize, width: usize, factor: usize) -> Result<()> {
    if factor == 0 || height % factor != 0 {
        return Err(Error::NotDivisible {
            axis: Axis::Row,
            extent: height,
            factor,
        });
    }
    if width % factor != 0 {
        return Err(Error::NotDivisible {
            axis: Axis::Col,
            extent: width,
            factor,
        });
    }
    Ok(())
}

fn check_stride(stride: usize) -> Result<()> {
    if stride < 2 {
        return Err(Error::InvalidConfig(alloc::format!(
            "stride must be at least 2, got {stride}"
        )));
    }
    Ok(())
}

/// Rearranges each `stride x stride` block into `stride²` channels.
///
/// Channel `k` of block `(i, j)` holds pixel `(i*s + k/s, j*s + k%s)`.
pub fn pixel_unshuffle(img: &Image, stride: usize) -> Result<ChannelStack> {
    check_stride(stride)?;
    check_divisible(img.height, img.width, stride)?;
    let (h, w) = (img.height / stride, img.width / stride);
    let channels = stride * stride;
    let mut data = vec![0.0; img.data.len()];
    for k in 0..channels {
        let (dr, dc) = (k / stride, k % stride);
        let plane = &mut data[k * h * w..(k + 1) * h * w];
        for i in 0..h {
            let src = img.row(i * stride + dr);
            for j in 0..w {
                plane[i * w + j] = src[j * stride + dc];
            }
        }
    }
    Ok(ChannelStack {
        height: h,
        width: w,
        channels,
        data,
    })
}

/// Inverse of [`pixel_unshuffle`].
pub fn pixel_shuffle(stack: &ChannelStack, stride: usize) -> Result<Image> {
    check_stride(stride)?;
    if stack.channels != stride * stride {
        return Err(Error::ChannelMismatch {
            expected: stride * stride,
            got: stack.channels,
        });
    }
    let (h, w) = (stack.height * stride, stack.width * stride);
    let mut data = vec![0.0; h * w];
    for k in 0..stack.channels {
        let (dr, dc) = (k / stride, k % stride);
        let plane = stack.channel(k);
        for i in 0..stack.height {
            let dst = &mut data[(i * stride + dr) * w..(i * stride + dr + 1) * w];
            for j in 0..stack.width {
                dst[j * stride + dc] = plane[i * stack.width + j];
            }
        }
    }
    Ok(Image {
        height: h,
        width: w,
        data,
    })
}

/// Copies the `size x size` window whose top-left corner is `(top, left)`.
pub fn crop_patch(img: &Image, top: usize, left: usize, size: usize) -> Result<Image> {
    crop(img, top, left, size, size).map_err(|_| Error::OutOfBounds {
        top,
        left,
        size,
        need_h: top.saturating_add(size),
        need_w: left.saturating_add(size),
        height: img.height,
        width: img.width,
    })
}

/// Rectangular crop; `crop_patch` is the square case.
pub fn crop(img: &Image, top: usize, left: usize, height: usize, width: usize) -> Result<Image> {
    let fits = height > 0
        && width > 0
        && top.checked_add(height).is_some_and(|b| b <= img.height)
        && left.checked_add(width).is_some_and(|r| r <= img.width);
    if !fits {
        return Err(Error::OutOfBounds {
            top,
            left,
            size: height.max(width),
            need_h: top.saturating_add(height),
            need_w: left.saturating_add(width),
            height: img.height,
            width: img.width,
        });
    }
    let mut data = Vec::with_capacity(height * width);
    for r in top..top + height {
        data.extend_from_slice(&img.row(r)[left..left + width]);
    }
    Ok(Image {
        height,
        width,
        data,
    })
}

/// Center-crops to the largest extent divisible by `multiple` along each axis.
pub fn center_crop_to_multiple(img: &Image, multiple: usize) -> Result<Image> {
    let h = img.height - img.height % multiple;
    let w = img.width - img.width % multiple;
    if h == 0 || w == 0 {
        return Err(Error::TooSmall {
            height: img.height,
            width: img.width,
            window: multiple,
        });
    }
    center_crop(img, h, w)
}

/// The centered `height x width` window, offset by `floor(excess / 2)`.
pub fn center_crop(img: &Image, height: usize, width: usize) -> Result<Image> {
    if (height, width) == img.dims() {
        return Ok(img.clone());
    }
    if height > img.height || width > img.width {
        return Err(Error::OutOfBounds {
            top: 0,
            left: 0,
            size: height.max(width),
            need_h: height,
            need_w: width,
            height: img.height,
            width: img.width,
        });
    }
    crop(img, (img.height - height) / 2, (img.width - width) / 2, height, width)
}
