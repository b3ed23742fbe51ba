//! Forward and reverse kernels for the layers used by the denoiser.

use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{gemm, MatRef, Real, Tensor};

pub const LEAKY_SLOPE: f64 = 0.1;

/// Unfolds `k x k` zero-padded neighborhoods into rows of a
/// `(cin * k * k) x (h * w)` matrix.
fn im2col<T: Real>(x: &Tensor<T>, k: usize) -> Vec<T> {
    let (h, w) = (x.height, x.width);
    let pad = (k / 2) as isize;
    let mut cols = vec![T::zero(); x.channels * k * k * h * w];
    for ci in 0..x.channels {
        let src = x.channel(ci);
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * h * w..(row + 1) * h * w];
                let dx = kx as isize - pad;
                // valid output columns for this horizontal shift
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        continue;
                    }
                    let srow = &src[sy as usize * w..(sy as usize + 1) * w];
                    let d = &mut dst[y * w..(y + 1) * w];
                    let sx0 = (x0 as isize + dx) as usize;
                    d[x0..x1].copy_from_slice(&srow[sx0..sx0 + (x1 - x0)]);
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`].
fn col2im<T: Real>(cols: &[T], cin: usize, h: usize, w: usize, k: usize) -> Tensor<T> {
    let pad = (k / 2) as isize;
    let mut out = Tensor::zeros(cin, h, w);
    for ci in 0..cin {
        let dst = out.channel_mut(ci);
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * h * w..(row + 1) * h * w];
                let dx = kx as isize - pad;
                let x0 = (-dx).max(0) as usize;
                let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize || x0 >= x1 {
                        continue;
                    }
                    let drow = &mut dst[sy as usize * w..(sy as usize + 1) * w];
                    let s = &src[y * w..(y + 1) * w];
                    let sx0 = (x0 as isize + dx) as usize;
                    for (d, &v) in drow[sx0..sx0 + (x1 - x0)].iter_mut().zip(&s[x0..x1]) {
                        *d += v;
                    }
                }
            }
        }
    }
    out
}

/// Same-size convolution (odd `k`, zero padding `k/2` on every side).
/// `weight` is `[cout, cin, k, k]`.
pub(crate) fn conv_forward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    bias: &[T],
    cout: usize,
    k: usize,
) -> Tensor<T> {
    let hw = x.plane();
    let ck = x.channels * k * k;
    let mut out = Tensor::zeros(cout, x.height, x.width);
    for (co, &b) in bias.iter().enumerate() {
        out.channel_mut(co).fill(b);
    }
    let w = MatRef::new(weight, cout, ck);
    if k == 1 {
        gemm(w, MatRef::new(&x.data, ck, hw), T::one(), &mut out.data);
    } else {
        let cols = im2col(x, k);
        gemm(w, MatRef::new(&cols, ck, hw), T::one(), &mut out.data);
    }
    out
}

/// Accumulates weight and bias gradients; returns the input gradient.
pub(crate) fn conv_backward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    cout: usize,
    k: usize,
    dy: &Tensor<T>,
    dweight: &mut [T],
    dbias: &mut [T],
) -> Tensor<T> {
    let hw = x.plane();
    let ck = x.channels * k * k;
    for (co, db) in dbias.iter_mut().enumerate() {
        *db += dy.channel(co).iter().copied().sum::<T>();
    }
    let dy_m = MatRef::new(&dy.data, cout, hw);
    let w = MatRef::new(weight, cout, ck);
    if k == 1 {
        gemm(dy_m, MatRef::new(&x.data, ck, hw).t(), T::one(), dweight);
        let mut dx = Tensor::zeros(x.channels, x.height, x.width);
        gemm(w.t(), dy_m, T::zero(), &mut dx.data);
        dx
    } else {
        let cols = im2col(x, k);
        gemm(dy_m, MatRef::new(&cols, ck, hw).t(), T::one(), dweight);
        let mut dcols = vec![T::zero(); ck * hw];
        gemm(w.t(), dy_m, T::zero(), &mut dcols);
        col2im(&dcols, x.channels, x.height, x.width, k)
    }
}

pub(crate) fn leaky_relu<T: Real>(mut x: Tensor<T>) -> Tensor<T> {
    let slope = T::from_f64(LEAKY_SLOPE);
    for v in &mut x.data {
        if *v < T::zero() {
            *v *= slope;
        }
    }
    x
}

/// Uses the activation output: its sign matches the input's.
pub(crate) fn leaky_relu_backward<T: Real>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let slope = T::from_f64(LEAKY_SLOPE);
    let data = y
        .data
        .iter()
        .zip(&dy.data)
        .map(|(&o, &g)| if o < T::zero() { g * slope } else { g })
        .collect();
    Tensor::from_vec(y.channels, y.height, y.width, data)
}

/// 2x2 max pooling; also returns the winning position of each window.
pub(crate) fn max_pool2<T: Real>(x: &Tensor<T>) -> (Tensor<T>, Vec<u8>) {
    let (h, w) = (x.height / 2, x.width / 2);
    let mut out = Tensor::zeros(x.channels, h, w);
    let mut arg = vec![0u8; x.channels * h * w];
    for c in 0..x.channels {
        let src = x.channel(c);
        let base = c * h * w;
        for i in 0..h {
            for j in 0..w {
                let mut best = src[2 * i * x.width + 2 * j];
                let mut idx = 0u8;
                for (n, (di, dj)) in [(0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                    let v = src[(2 * i + di) * x.width + 2 * j + dj];
                    if v > best {
                        best = v;
                        idx = n as u8 + 1;
                    }
                }
                out.data[base + i * w + j] = best;
                arg[base + i * w + j] = idx;
            }
        }
    }
    (out, arg)
}

pub(crate) fn max_pool2_backward<T: Real>(
    x_shape: (usize, usize, usize),
    arg: &[u8],
    dy: &Tensor<T>,
) -> Tensor<T> {
    let (c, h, w) = x_shape;
    let mut dx = Tensor::zeros(c, h, w);
    let (oh, ow) = (dy.height, dy.width);
    for ch in 0..c {
        for i in 0..oh {
            for j in 0..ow {
                let n = ch * oh * ow + i * ow + j;
                let a = arg[n] as usize;
                let (di, dj) = (a / 2, a % 2);
                dx.data[ch * h * w + (2 * i + di) * w + 2 * j + dj] += dy.data[n];
            }
        }
    }
    dx
}

/// Nearest-neighbour 2x upsampling.
pub(crate) fn upsample2<T: Real>(x: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (x.height * 2, x.width * 2);
    let mut out = Tensor::zeros(x.channels, h, w);
    for c in 0..x.channels {
        let src = x.channel(c);
        let dst = out.channel_mut(c);
        for i in 0..h {
            let srow = &src[(i / 2) * x.width..(i / 2 + 1) * x.width];
            for (j, d) in dst[i * w..(i + 1) * w].iter_mut().enumerate() {
                *d = srow[j / 2];
            }
        }
    }
    out
}

pub(crate) fn upsample2_backward<T: Real>(dy: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (dy.height / 2, dy.width / 2);
    let mut dx = Tensor::zeros(dy.channels, h, w);
    for c in 0..dy.channels {
        let src = dy.channel(c);
        let dst = dx.channel_mut(c);
        for i in 0..dy.height {
            for j in 0..dy.width {
                dst[(i / 2) * w + j / 2] += src[i * dy.width + j];
            }
        }
    }
    dx
}

pub(crate) fn concat<T: Real>(parts: &[&Tensor<T>]) -> Tensor<T> {
    let (h, w) = (parts[0].height, parts[0].width);
    let channels = parts.iter().map(|p| p.channels).sum();
    let mut data = Vec::with_capacity(channels * h * w);
    for p in parts {
        assert_eq!((p.height, p.width), (h, w), "concat of mismatched planes");
        data.extend_from_slice(&p.data);
    }
    Tensor::from_vec(channels, h, w, data)
}

/// `[c * s², h, w] -> [c, h s, w s]`; input channel `c s² + dr s + dc` lands
/// at offset `(dr, dc)` of each output block.
pub(crate) fn pixel_shuffle<T: Real>(x: &Tensor<T>, s: usize) -> Tensor<T> {
    let c = x.channels / (s * s);
    let (h, w) = (x.height * s, x.width * s);
    let mut out = Tensor::zeros(c, h, w);
    for co in 0..c {
        for dr in 0..s {
            for dc in 0..s {
                let src = x.channel(co * s * s + dr * s + dc);
                let dst = out.channel_mut(co);
                for i in 0..x.height {
                    let drow = &mut dst[(i * s + dr) * w..(i * s + dr + 1) * w];
                    for j in 0..x.width {
                        drow[j * s + dc] = src[i * x.width + j];
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn pixel_unshuffle<T: Real>(x: &Tensor<T>, s: usize) -> Tensor<T> {
    let (h, w) = (x.height / s, x.width / s);
    let mut out = Tensor::zeros(x.channels * s * s, h, w);
    for ci in 0..x.channels {
        let src = x.channel(ci);
        for dr in 0..s {
            for dc in 0..s {
                let dst = out.channel_mut(ci * s * s + dr * s + dc);
                for i in 0..h {
                    for j in 0..w {
                        dst[i * w + j] = src[(i * s + dr) * x.width + j * s + dc];
                    }
                }
            }
        }
    }
    out
}

/// Transposed convolution with kernel = stride = `s`. `weight` is
/// `[cin, cout, s, s]`.
pub(crate) fn trans_conv_forward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    bias: &[T],
    cout: usize,
    s: usize,
) -> Tensor<T> {
    let hw = x.plane();
    let mut y = Tensor::zeros(cout * s * s, x.height, x.width);
    gemm(
        MatRef::new(weight, x.channels, cout * s * s).t(),
        MatRef::new(&x.data, x.channels, hw),
        T::zero(),
        &mut y.data,
    );
    let mut out = pixel_shuffle(&y, s);
    for (co, &b) in bias.iter().enumerate() {
        for v in out.channel_mut(co) {
            *v += b;
        }
    }
    out
}

pub(crate) fn trans_conv_backward<T: Real>(
    x: &Tensor<T>,
    weight: &[T],
    cout: usize,
    s: usize,
    dy: &Tensor<T>,
    dweight: &mut [T],
    dbias: &mut [T],
) -> Tensor<T> {
    let hw = x.plane();
    for (co, db) in dbias.iter_mut().enumerate() {
        *db += dy.channel(co).iter().copied().sum::<T>();
    }
    let dyu = pixel_unshuffle(dy, s);
    let dyu_m = MatRef::new(&dyu.data, cout * s * s, hw);
    gemm(MatRef::new(&x.data, x.channels, hw), dyu_m.t(), T::one(), dweight);
    let mut dx = Tensor::zeros(x.channels, x.height, x.width);
    gemm(
        MatRef::new(weight, x.channels, cout * s * s),
        dyu_m,
        T::zero(),
        &mut dx.data,
    );
    dx
}

/// Source taps for half-pixel-centred linear interpolation by factor `s`
/// with edge clamping: `(i0, i1, weight of i1)` per output index.
pub(crate) fn linear_taps(n: usize, s: usize) -> Vec<(usize, usize, f64)> {
    (0..n * s)
        .map(|o| {
            let src = ((o as f64 + 0.5) / s as f64 - 0.5).max(0.0);
            let i0 = (src as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub(crate) fn bilinear_up<T: Real>(x: &Tensor<T>, s: usize) -> Tensor<T> {
    let (h, w) = (x.height * s, x.width * s);
    let tx = linear_taps(x.width, s);
    let ty = linear_taps(x.height, s);
    let mut out = Tensor::zeros(x.channels, h, w);
    let mut tmp = vec![T::zero(); x.height * w];
    for c in 0..x.channels {
        let src = x.channel(c);
        for i in 0..x.height {
            let srow = &src[i * x.width..(i + 1) * x.width];
            for (o, &(a, b, f)) in tx.iter().enumerate() {
                let f = T::from_f64(f);
                tmp[i * w + o] = srow[a] * (T::one() - f) + srow[b] * f;
            }
        }
        let dst = out.channel_mut(c);
        for (o, &(a, b, f)) in ty.iter().enumerate() {
            let f = T::from_f64(f);
            let g = T::one() - f;
            for j in 0..w {
                dst[o * w + j] = tmp[a * w + j] * g + tmp[b * w + j] * f;
            }
        }
    }
    out
}

pub(crate) fn bilinear_up_backward<T: Real>(
    x_shape: (usize, usize, usize),
    s: usize,
    dy: &Tensor<T>,
) -> Tensor<T> {
    let (c, h, w) = x_shape;
    let wo = w * s;
    let tx = linear_taps(w, s);
    let ty = linear_taps(h, s);
    let mut dx = Tensor::zeros(c, h, w);
    let mut tmp = vec![T::zero(); h * wo];
    for ch in 0..c {
        tmp.fill(T::zero());
        let g = dy.channel(ch);
        for (o, &(a, b, f)) in ty.iter().enumerate() {
            let f = T::from_f64(f);
            let nf = T::one() - f;
            for j in 0..wo {
                let v = g[o * wo + j];
                tmp[a * wo + j] += v * nf;
                tmp[b * wo + j] += v * f;
            }
        }
        let dst = dx.channel_mut(ch);
        for i in 0..h {
            for (o, &(a, b, f)) in tx.iter().enumerate() {
                let f = T::from_f64(f);
                let v = tmp[i * wo + o];
                dst[i * w + a] += v * (T::one() - f);
                dst[i * w + b] += v * f;
            }
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(x: &Tensor<f64>, wt: &[f64], b: &[f64], cout: usize, k: usize) -> Tensor<f64> {
        let pad = (k / 2) as isize;
        let mut out = Tensor::zeros(cout, x.height, x.width);
        for co in 0..cout {
            for y in 0..x.height as isize {
                for xx in 0..x.width as isize {
                    let mut acc = b[co];
                    for ci in 0..x.channels {
                        for ky in 0..k as isize {
                            for kx in 0..k as isize {
                                let (sy, sx) = (y + ky - pad, xx + kx - pad);
                                if sy < 0 || sx < 0 || sy >= x.height as isize || sx >= x.width as isize {
                                    continue;
                                }
                                let wv = wt[((co * x.channels + ci) * k + ky as usize) * k + kx as usize];
                                acc += wv * x.data[(ci * x.height + sy as usize) * x.width + sx as usize];
                            }
                        }
                    }
                    out.data[(co * x.height + y as usize) * x.width + xx as usize] = acc;
                }
            }
        }
        out
    }

    fn pseudo(n: usize, salt: u64) -> Vec<f64> {
        (0..n as u64)
            .map(|i| {
                let z = (i.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ salt).wrapping_mul(0xBF58_476D_1CE4_E5B9);
                (z >> 11) as f64 / (1u64 << 53) as f64 - 0.5
            })
            .collect()
    }

    #[test]
    fn conv_matches_direct_sum() {
        for k in [1, 3] {
            let x = Tensor::from_vec(3, 5, 7, pseudo(105, 1));
            let wt = pseudo(4 * 3 * k * k, 2);
            let b = pseudo(4, 3);
            let fast = conv_forward(&x, &wt, &b, 4, k);
            let slow = naive_conv(&x, &wt, &b, 4, k);
            for (a, e) in fast.data.iter().zip(&slow.data) {
                assert!((a - e).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint() {
        // <im2col(x), c> == <x, col2im(c)>
        let x = Tensor::from_vec(2, 4, 6, pseudo(48, 5));
        let cols = im2col(&x, 3);
        let c = pseudo(cols.len(), 6);
        let lhs: f64 = cols.iter().zip(&c).map(|(a, b)| a * b).sum();
        let back = col2im(&c, 2, 4, 6, 3);
        let rhs: f64 = x.data.iter().zip(&back.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn shuffle_round_trip() {
        let x = Tensor::from_vec(8, 3, 2, pseudo(48, 9));
        let y = pixel_shuffle(&x, 2);
        assert_eq!((y.channels, y.height, y.width), (2, 6, 4));
        assert_eq!(pixel_unshuffle(&y, 2), x);
    }

    #[test]
    fn bilinear_preserves_constants() {
        let x = Tensor::from_vec(1, 3, 4, vec![0.25; 12]);
        for s in 2..5 {
            let y = bilinear_up(&x, s);
            assert!(y.data.iter().all(|&v| (v - 0.25f64).abs() < 1e-15));
        }
    }

    #[test]
    fn bilinear_backward_is_adjoint() {
        let x = Tensor::from_vec(2, 3, 5, pseudo(30, 3));
        let y = bilinear_up(&x, 3);
        let g = Tensor::from_vec(2, 9, 15, pseudo(270, 4));
        let lhs: f64 = y.data.iter().zip(&g.data).map(|(a, b)| a * b).sum();
        let dx = bilinear_up_backward((2, 3, 5), 3, &g);
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn pool_routes_gradient_to_max() {
        let x = Tensor::from_vec(1, 2, 2, vec![0.1, 0.9, 0.3, 0.2]);
        let (y, arg) = max_pool2(&x);
        assert_eq!(y.data, vec![0.9]);
        let dx = max_pool2_backward((1, 2, 2), &arg, &Tensor::from_vec(1, 1, 1, vec![2.0]));
        assert_eq!(dx.data, vec![0.0, 2.0, 0.0, 0.0]);
    }
}
