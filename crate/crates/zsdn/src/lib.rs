//! File formats, checkpoints, experiment orchestration and the command-line
//! front end for the zero-shot sub-sampling denoiser in [`zsdn_core`].

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;

pub use config::ExperimentConfig;
pub use error::{AppError, AppResult};
pub use zsdn_core as core;
