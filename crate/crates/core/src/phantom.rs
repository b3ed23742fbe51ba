//! Synthetic atomic-lattice ground truth.
//!
//! Images are sums of isotropic Gaussian columns at the sites of a 2D
//! Bravais lattice with a basis, plus a constant background, scaled so the
//! maximum is 1. Per-site amplitude scales model partial occupancy.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::RngSeed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSite {
    /// Fractional coordinates along the two lattice vectors.
    pub offset: [f64; 2],
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub height: usize,
    pub width: usize,
    /// Lattice vectors in pixels, `(row, col)` components.
    pub vectors: [[f64; 2]; 2],
    /// Position of lattice site `(0, 0)` in pixels, `(row, col)`.
    pub origin: [f64; 2],
    pub atom_sigma: f64,
    pub atom_amplitude: f64,
    pub basis: Vec<BasisSite>,
    pub background: f64,
    pub jitter_sigma: f64,
    pub seed: RngSeed,
}

impl LatticeSpec {
    /// Rotated two-site lattice with bright and dim columns on a dark
    /// background, in the spirit of a supported-catalyst HREM frame.
    pub fn hrem(height: usize, width: usize, seed: RngSeed) -> Self {
        Self {
            height,
            width,
            vectors: [[10.8, 2.4], [-2.4, 10.8]],
            origin: [3.0, 5.0],
            atom_sigma: 1.8,
            atom_amplitude: 1.0,
            basis: vec![
                BasisSite {
                    offset: [0.0, 0.0],
                    scale: 1.0,
                },
                BasisSite {
                    offset: [0.5, 0.5],
                    scale: 0.45,
                },
            ],
            background: 0.08,
            jitter_sigma: 0.25,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        let [[a, b], [c, d]] = self.vectors;
        let det = a * d - b * c;
        if !det.is_finite() || det.abs() < 1e-9 {
            return Err(Error::DegenerateLattice);
        }
        if self.height == 0 || self.width == 0 {
            return Err(Error::InvalidConfig("phantom must be non-empty".into()));
        }
        if !(self.atom_sigma > 0.0) {
            return Err(Error::InvalidConfig("atom sigma must be positive".into()));
        }
        if self.atom_amplitude < 0.0 || self.basis.iter().any(|s| s.scale < 0.0) {
            return Err(Error::InvalidConfig("amplitudes must be nonnegative".into()));
        }
        if self.background < 0.0 || self.jitter_sigma < 0.0 {
            return Err(Error::InvalidConfig(
                "background and jitter must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Renders the lattice. With any nonzero column amplitude the result has
/// maximum exactly 1; otherwise it is the constant background.
pub fn generate_lattice(spec: &LatticeSpec) -> Result<Image> {
    spec.validate()?;
    let (h, w) = (spec.height, spec.width);
    let mut acc = vec![spec.background; h * w];
    let [[a, b], [c, d]] = spec.vectors;
    let det = a * d - b * c;
    let reach = 5.0 * spec.atom_sigma + 4.0 * spec.jitter_sigma + 1.0;

    // lattice coordinate range covering the padded frame
    let corners = [
        (-reach, -reach),
        (-reach, w as f64 + reach),
        (h as f64 + reach, -reach),
        (h as f64 + reach, w as f64 + reach),
    ];
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for (r, col) in corners {
        let (pr, pc) = (r - spec.origin[0], col - spec.origin[1]);
        // solve n1 * v1 + n2 * v2 = p
        let n1 = (pr * d - pc * c) / det;
        let n2 = (a * pc - b * pr) / det;
        for (k, n) in [n1, n2].into_iter().enumerate() {
            lo[k] = lo[k].min(n);
            hi[k] = hi[k].max(n);
        }
    }

    let mut rng = spec.seed.rng();
    let inv2s2 = 1.0 / (2.0 * spec.atom_sigma * spec.atom_sigma);
    let mut any_atom = false;
    for n1 in (Float::floor(lo[0]) as i64 - 1)..=(Float::ceil(hi[0]) as i64 + 1) {
        for n2 in (Float::floor(lo[1]) as i64 - 1)..=(Float::ceil(hi[1]) as i64 + 1) {
            for site in &spec.basis {
                let f1 = n1 as f64 + site.offset[0];
                let f2 = n2 as f64 + site.offset[1];
                let mut cr = spec.origin[0] + f1 * a + f2 * c;
                let mut cc = spec.origin[1] + f1 * b + f2 * d;
                if spec.jitter_sigma > 0.0 {
                    let jr: f64 = StandardNormal.sample(&mut rng);
                    let jc: f64 = StandardNormal.sample(&mut rng);
                    cr += spec.jitter_sigma * jr;
                    cc += spec.jitter_sigma * jc;
                }
                let amp = spec.atom_amplitude * site.scale;
                if amp == 0.0 {
                    continue;
                }
                let r0 = Float::floor(cr - reach).max(0.0) as usize;
                let r1 = (Float::ceil(cr + reach).max(-1.0) as i64).min(h as i64 - 1);
                let c0 = Float::floor(cc - reach).max(0.0) as usize;
                let c1 = (Float::ceil(cc + reach).max(-1.0) as i64).min(w as i64 - 1);
                if r1 < r0 as i64 || c1 < c0 as i64 {
                    continue;
                }
                any_atom = true;
                for r in r0..=r1 as usize {
                    let dr = r as f64 - cr;
                    for col in c0..=c1 as usize {
                        let dc = col as f64 - cc;
                        acc[r * w + col] += amp * Float::exp(-(dr * dr + dc * dc) * inv2s2);
                    }
                }
            }
        }
    }

    let max = acc.iter().copied().fold(0.0f64, f64::max);
    let data = if any_atom && max > 0.0 {
        acc.iter().map(|&v| (v / max) as f32).collect()
    } else {
        acc.iter().map(|&v| v.min(1.0) as f32).collect()
    };
    Image::new(h, w, data)
}
