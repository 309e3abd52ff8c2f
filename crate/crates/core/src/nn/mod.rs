//! A small differentiable-network toolkit with explicit forward and backward
//! passes: dense, 2-D convolution (HWC layout, no padding) and GRU layers,
//! Adam and orthogonal initialisation.
//!
//! Everything is generic over [`Real`] so gradient checks can run in `f64`
//! while training loops use `f32`.

mod adam;
mod checkpoint;
mod init;
mod kernels;
mod layers;
mod net;
mod tensor;

pub use adam::{clip_global_norm, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CheckpointEntry};
pub use init::{orthogonal_init, uniform_init};
pub use layers::{Activation, Init, LayerSpec, NetSpec};
pub use net::{Cache, Forward, Gradients, Net, NetParams};
pub use tensor::Tensor;

use std::fmt::Debug;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("stale cache: {0}")]
    StaleCache(String),
    #[error("non-finite gradient in tensor {tensor} (layer {layer}); update rejected")]
    NonFinite { layer: usize, tensor: usize },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Floating-point element type for tensors.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Bytes per element in the checkpoint format.
    const BYTES: usize;

    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).unwrap()
    }

    fn f64(self) -> f64 {
        self.to_f64().unwrap()
    }

    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Real for f32 {
    const BYTES: usize = 4;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().unwrap())
    }
}

impl Real for f64 {
    const BYTES: usize = 8;

    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }

    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().unwrap())
    }
}
