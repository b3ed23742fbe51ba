//! Fixed, parameter-free image operators.

use alloc::vec::Vec;

use crate::error::Result;
use crate::image::Image;
use crate::nn::{image_to_tensor, tensor_to_image};

/// Separable `[1, 2, 1] / 4` blur with mirrored borders (edge pixel repeated).
pub fn gaussian_blur_3x3(img: &Image) -> Image {
    let (h, w) = img.dims();
    let tap = |v: &dyn Fn(usize) -> f32, i: usize, n: usize| {
        let lo = if i == 0 { 0 } else { i - 1 };
        let hi = if i + 1 == n { i } else { i + 1 };
        0.25 * v(lo) + 0.5 * v(i) + 0.25 * v(hi)
    };
    let horiz: Vec<f32> = (0..h * w)
        .map(|n| {
            let (r, c) = (n / w, n % w);
            tap(&|j| img.get(r, j), c, w)
        })
        .collect();
    Image::from_fn(h, w, |r, c| tap(&|i| horiz[i * w + c], r, h))
}

/// Half-pixel-centred bilinear interpolation by an integer factor.
pub fn bilinear_upsample(img: &Image, factor: usize) -> Result<Image> {
    let t = image_to_tensor::<f32>(img);
    tensor_to_image(crate::nn::bilinear_up(&t, factor))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_keeps_constants_and_mass_in_interior() {
        let img = Image::filled(5, 6, 0.3);
        let out = gaussian_blur_3x3(&img);
        assert!(out.data().iter().all(|v| (v - 0.3).abs() < 1e-6));
        let mut delta = Image::zeros(5, 5);
        delta.set(2, 2, 16.0);
        let out = gaussian_blur_3x3(&delta);
        assert_eq!(out.get(2, 2), 4.0);
        assert_eq!(out.get(1, 2), 2.0);
        assert_eq!(out.get(1, 1), 1.0);
        assert!((out.data().iter().sum::<f32>() - 16.0).abs() < 1e-5);
    }

    #[test]
    fn upsample_dims() {
        let img = Image::filled(3, 4, 1.0);
        let up = bilinear_upsample(&img, 3).unwrap();
        assert_eq!(up.dims(), (9, 12));
        assert!(up.data().iter().all(|&v| (v - 1.0).abs() < 1e-6));
    }
}
