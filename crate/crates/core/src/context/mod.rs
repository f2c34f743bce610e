//! Embodiment context encoder: a mask CNN and a single-layer LSTM summarize
//! the last `K` (mask, action) pairs into a latent vector `z`. An auxiliary
//! head predicts the step reward and the camera height from `z` during
//! training only.

mod encoder;
mod losses;
mod probe;

pub use encoder::{masks_tensor, AuxHead, ContextEncoder, ContextHistory, Window};
pub use losses::{aux_losses, consistency_loss, group_means, AuxLosses, LossWeights, COSINE_EPS, HEIGHT_SCALE};
pub use probe::{context_probe, ProbeReport};

use serde::{Deserialize, Serialize};

/// Encoder dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContextConfig {
    /// History length `K`.
    pub k: usize,
    /// Context dimension.
    pub d_z: usize,
    /// Encoder LSTM hidden size.
    pub hidden: usize,
    /// Hidden width of the auxiliary head.
    pub aux_hidden: usize,
}

impl Default for ContextConfig {
    fn default() -> Self {
        Self {
            k: 8,
            d_z: 16,
            hidden: 32,
            aux_hidden: 32,
        }
    }
}

#[cfg(test)]
mod tests;
