use serde::{Deserialize, Serialize};

use crate::data::{Feature, DEFAULT_PAIR_FEATURES};
use crate::error::{Error, Result};
use crate::network::GateSelection;

/// Hyperparameters for one model instance. All randomness derives from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of latent co-varying patterns (K).
    pub kernels: usize,
    /// Convolution window in days (L).
    pub window: usize,
    /// LSTM hidden size (H).
    pub hidden: usize,
    pub layers: usize,
    /// Weight on the Frobenius norm of all parameters.
    pub lambda: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub features: Vec<Feature>,
    pub gates: GateSelection,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small enough to train on a laptop in seconds to minutes.
    pub fn desk() -> Self {
        Self {
            kernels: 4,
            window: 5,
            hidden: 32,
            layers: 1,
            lambda: 1e-4,
            lr: 1e-3,
            epochs: 200,
            seed: 0,
            features: DEFAULT_PAIR_FEATURES.to_vec(),
            gates: GateSelection::igo(),
        }
    }

    /// K = 16, H = 256, two layers.
    pub fn paper_scale() -> Self {
        Self {
            kernels: 16,
            hidden: 256,
            layers: 2,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kernels", self.kernels),
            ("window", self.window),
            ("hidden", self.hidden),
            ("layers", self.layers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("lr must be positive, got {}", self.lr)));
        }
        if self.features.is_empty() {
            return Err(Error::invalid("feature subset is empty"));
        }
        Ok(())
    }

    /// Rows of each observation matrix (2M).
    pub fn observation_rows(&self) -> usize {
        let mut f = self.features.clone();
        f.sort_unstable();
        f.dedup();
        2 * f.len()
    }
}
