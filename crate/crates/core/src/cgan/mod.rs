//! Conditional GAN mapping accelerometer spectrogram images to mel
//! spectrogram images: a U-Net generator, a patch discriminator and the
//! alternating two-phase training loop.

mod checkpoint;
mod discriminator;
mod generator;
mod train;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use discriminator::Discriminator;
pub use generator::Generator;
pub use train::{
    composite_objective, identity_baseline, train, train_with_progress, EpochStats, Losses,
    TrainConfig, TrainState, TrainingData,
};

/// Architecture hyper-parameters shared by both networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    /// Side of the square input and output images; a power of two ≥ 32.
    pub image_size: usize,
    /// Channels of the first encoder level; deeper levels double up to 8×.
    pub base_channels: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            image_size: 128,
            base_channels: 64,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.image_size.is_power_of_two() || self.image_size < 32 {
            return Err(Error::Parameter(format!(
                "image_size must be a power of two >= 32, got {}",
                self.image_size
            )));
        }
        if self.base_channels == 0 {
            return Err(Error::Parameter("base_channels must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of stride-2 encoder levels; the bottleneck is 2×2.
    pub fn depth(&self) -> usize {
        self.image_size.trailing_zeros() as usize - 1
    }

    /// Output channels of encoder level `i`.
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level.min(3)
    }

    /// Fingerprint stored in checkpoints so weights cannot be loaded into
    /// a differently shaped network.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(b"accear-net-v1");
        h.update((self.image_size as u64).to_le_bytes());
        h.update((self.base_channels as u64).to_le_bytes());
        h.finalize().into()
    }
}

/// Maps `[0, 1]` image values to the networks' `[-1, 1]` range.
pub(crate) fn to_signed(v: f32) -> f32 {
    2.0 * v - 1.0
}

pub(crate) fn to_unit(v: f32) -> f32 {
    ((v + 1.0) * 0.5).clamp(0.0, 1.0)
}
