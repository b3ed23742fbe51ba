//! Experiment configuration: one JSON document holding every knob of a run.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zsdn_core::{LatticeSpec, MmseConfig, NetConfig, NoiseParams, RngSeed, SamplerConfig, Strategy, TrainConfig, Upsampling};

use crate::error::{AppError, AppResult};
use crate::io;

/// Learning rate of the desk-scale presets.
pub const DESK_LR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Ground-truth image; a phantom is generated when absent.
    pub clean: Option<PathBuf>,
    /// Noisy input; simulated from the clean image when absent.
    pub input: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            clean: None,
            input: None,
            checkpoint: None,
            out: PathBuf::from("run"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed the component seeds were derived from.
    pub seed: u64,
    pub phantom: LatticeSpec,
    pub noise: NoiseParams,
    pub noise_seed: RngSeed,
    /// Levels written by `simulate` and swept by the strategy ablation.
    pub noise_levels: Vec<NoiseParams>,
    pub net: NetConfig,
    pub train: TrainConfig,
    pub mmse: MmseConfig,
    /// Peak value used for PSNR/SSIM and image export.
    pub data_range: f64,
    /// Evaluate PSNR against the clean image every this many epochs (0: never).
    pub psnr_every: usize,
    pub m_sweep: Vec<usize>,
    pub paths: Paths,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut cfg = Self {
            seed: 0,
            phantom: LatticeSpec::hrem(256, 256, RngSeed(0)),
            noise: NoiseParams { a: 0.05, b: 0.02 },
            noise_seed: RngSeed(0),
            noise_levels: vec![
                NoiseParams { a: 0.1, b: 0.02 },
                NoiseParams { a: 0.05, b: 0.02 },
                NoiseParams { a: 0.02, b: 0.02 },
            ],
            net: NetConfig::default(),
            train: TrainConfig {
                lr: DESK_LR,
                ..TrainConfig::default()
            },
            mmse: MmseConfig::new(50, SamplerConfig::random(2, RngSeed(0))),
            data_range: 1.0,
            psnr_every: 0,
            m_sweep: vec![1, 5, 20, 50],
            paths: Paths::default(),
        };
        cfg.apply_seed(0);
        cfg
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> AppResult<Self> {
        io::read_json(path)
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        io::write_json(path, self)
    }

    /// Sets the master seed and re-derives every component seed from it.
    pub fn apply_seed(&mut self, seed: u64) {
        let master = RngSeed(seed);
        self.seed = seed;
        self.train.seed = master.derive(0);
        self.train.sampler.seed = master.derive(1);
        self.mmse.sampler.seed = master.derive(2);
        self.noise_seed = master.derive(3);
        self.phantom.seed = master.derive(4);
    }

    /// Sets the stride everywhere and adapts the stride-dependent sizes: the
    /// patch shrinks to a multiple of `stride * 2^depth`, and pixel-shuffle
    /// feature channels round up to a multiple of `stride²`.
    pub fn set_stride(&mut self, stride: usize) {
        self.net.stride = stride;
        self.train.sampler.stride = stride;
        self.mmse.sampler.stride = stride;
        if stride == 0 {
            return;
        }
        if self.net.upsampling == Upsampling::PixelShuffle {
            let q = stride * stride;
            self.net.feature_channels = self.net.feature_channels.div_ceil(q) * q;
        }
        let unit = self.net.image_multiple();
        if self.train.patch_size >= unit {
            self.train.patch_size -= self.train.patch_size % unit;
        }
    }

    pub fn set_strategy(&mut self, strategy: Strategy) {
        self.train.sampler.strategy = strategy;
        self.mmse.sampler.strategy = strategy;
    }

    pub fn set_upsampling(&mut self, upsampling: Upsampling) {
        self.net.upsampling = upsampling;
        let s = self.net.stride;
        self.set_stride(s);
    }

    pub fn validate(&self) -> AppResult<()> {
        self.train.validate(&self.net)?;
        self.mmse.sampler.validate()?;
        if self.mmse.sampler.stride != self.net.stride {
            return Err(AppError::Config(format!(
                "inference stride {} differs from network stride {}",
                self.mmse.sampler.stride, self.net.stride
            )));
        }
        if self.mmse.draws == 0 {
            return Err(AppError::Config("m must be at least 1".into()));
        }
        if self.train.sampler.strategy != self.mmse.sampler.strategy
            || self.train.sampler.fixed_offset != self.mmse.sampler.fixed_offset
        {
            return Err(AppError::Config("training and inference sub-samplers must use the same strategy".into()));
        }
        if !(self.data_range > 0.0 && self.data_range.is_finite()) {
            return Err(AppError::Config(format!("data range must be positive, got {}", self.data_range)));
        }
        self.noise.validate_corruption()?;
        for level in &self.noise_levels {
            level.validate_corruption()?;
        }
        if self.m_sweep.contains(&0) {
            return Err(AppError::Config("m_sweep entries must be at least 1".into()));
        }
        Ok(())
    }
}
