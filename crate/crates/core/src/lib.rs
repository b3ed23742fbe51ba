//! Zero-shot single-image denoising by random sub-sampling.
//!
//! A single noisy image is repeatedly split into a low-resolution
//! sub-sampled input and the complementary set of held-out pixels. A
//! super-resolving network learns to predict the held-out pixels from the
//! input; at inference, predictions from many random splits are averaged.
//!
//! This crate is `no_std` with `alloc`. Enable the `std` feature for runtime
//! SIMD dispatch in the matrix kernels.

#![no_std]
extern crate alloc;

pub mod error;
pub mod filter;
pub mod image;
pub mod inference;
pub mod metrics;
pub mod nn;
pub mod noise;
pub mod optim;
pub mod phantom;
pub mod rng;
pub mod subsample;
pub mod train;

pub use error::{Axis, Error, Result};
pub use image::{center_crop, center_crop_to_multiple, crop, crop_patch, pixel_shuffle, pixel_unshuffle, ChannelStack, Image};
pub use nn::{Gradients, Model, NetConfig, Upsampling};
pub use noise::{corrupt, snr_db, theoretical_moments, NoiseParams};
pub use rng::RngSeed;
pub use subsample::{apply_mask, resample_set, subsample, SamplerConfig, Strategy, SubsampleResult};
pub use inference::{denoise_mmse, denoise_once, MmseConfig};
pub use metrics::{error_map, line_profile, psnr, ssim, EvalReport};
pub use phantom::{generate_lattice, LatticeSpec};
pub use train::{loss_decomposition_check, masked_loss, train_zero_shot, TrainConfig, TrainLog};
