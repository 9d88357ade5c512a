//! Small reverse-mode autodiff engine and the network pieces shared by the
//! generative models.

pub mod checkpoint;
pub mod embedding;
pub mod gradcheck;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;
pub mod tensor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use embedding::{sinusoidal_embedding, ConditionEmbedding, Conditioning, DimensionScale};
pub use gradcheck::finite_difference_check;
pub use optim::{adam_step, clip_parameters, clip_subset, Adam, AdamConfig, AdamState};
pub use params::{ParamId, ParamStore};
pub use tape::{Activation, Gradients, Tape, Var};
pub use tensor::Tensor;

/// Architecture hyperparameters shared by the denoiser, generator and critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_bins: usize,
    pub base_channels: usize,
    pub n_resblocks_per_stage: usize,
    /// Number of down/upsampling steps.
    pub n_stages: usize,
    pub embed_dim: usize,
    /// Width of the sinusoidal aspect embedding fed to the condition MLP.
    pub angle_dim: usize,
    /// Target size, informational only.
    pub parameter_budget: usize,
}

impl NetworkConfig {
    pub fn desk() -> Self {
        Self {
            n_bins: 256,
            base_channels: 8,
            n_resblocks_per_stage: 1,
            n_stages: 3,
            embed_dim: 64,
            angle_dim: 16,
            parameter_budget: 100_000,
        }
    }

    pub fn full_scale() -> Self {
        Self {
            n_bins: 256,
            base_channels: 32,
            n_resblocks_per_stage: 2,
            n_stages: 3,
            embed_dim: 128,
            angle_dim: 32,
            parameter_budget: 700_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("n_bins", self.n_bins),
            ("base_channels", self.base_channels),
            ("n_resblocks_per_stage", self.n_resblocks_per_stage),
            ("n_stages", self.n_stages),
            ("embed_dim", self.embed_dim),
            ("angle_dim", self.angle_dim),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::invalid(format!("network config: {name} must be positive")));
            }
        }
        if self.angle_dim % 2 == 1 {
            return Err(Error::invalid("network config: angle_dim must be even"));
        }
        if self.n_stages >= usize::BITS as usize || self.n_bins % (1usize << self.n_stages) != 0 {
            return Err(Error::invalid(format!(
                "network config: n_bins {} not divisible by 2^{}",
                self.n_bins, self.n_stages
            )));
        }
        Ok(())
    }

    /// Channel width at resolution level `level` (0 = full resolution).
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level.min(self.n_stages - 1)
    }

    pub fn coarsest_len(&self) -> usize {
        self.n_bins >> self.n_stages
    }
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::desk()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        NetworkConfig::desk().validate().unwrap();
        NetworkConfig::full_scale().validate().unwrap();
        let mut c = NetworkConfig::desk();
        c.n_bins = 100;
        assert!(c.validate().is_err());
        c = NetworkConfig::desk();
        c.embed_dim = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn channel_ladder() {
        let c = NetworkConfig::desk();
        let widths: Vec<usize> = (0..=c.n_stages).map(|l| c.channels(l)).collect();
        assert_eq!(widths, vec![8, 16, 32, 32]);
        assert_eq!(c.coarsest_len(), 32);
    }
}
