use alloc::string::String;
use core::fmt;

/// Image axis, used in error reports and line profiles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Row,
    Col,
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Axis::Row => f.write_str("height"),
            Axis::Col => f.write_str("width"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{axis} {extent} is not divisible by {factor}")]
    NotDivisible {
        axis: Axis,
        extent: usize,
        factor: usize,
    },
    #[error("expected {expected} channels, got {got}")]
    ChannelMismatch { expected: usize, got: usize },
    #[error(
        "window {size}x{size} at ({top}, {left}) needs rows..{need_h} cols..{need_w}, image is {height}x{width}"
    )]
    OutOfBounds {
        top: usize,
        left: usize,
        size: usize,
        need_h: usize,
        need_w: usize,
        height: usize,
        width: usize,
    },
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(usize, usize, usize, usize),
    #[error("negative intensity {value} at pixel {index} with signal-dependent noise")]
    NegativeIntensity { value: f32, index: usize },
    #[error("mask value {value} at pixel {index} is not binary")]
    NonBinaryMask { value: f32, index: usize },
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("image {height}x{width} is smaller than the {window}x{window} window")]
    TooSmall {
        height: usize,
        width: usize,
        window: usize,
    },
    #[error("index {index} out of range for {axis} {extent}")]
    IndexOutOfRange {
        axis: Axis,
        index: usize,
        extent: usize,
    },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("lattice vectors are linearly dependent")]
    DegenerateLattice,
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
