use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape and seed of the toy decoder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub seed: u64,
    /// Greedy decoding stops after emitting this token.
    pub end_token: Option<u32>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            layers: 28,
            heads: 8,
            model_dim: 128,
            ffn_dim: 512,
            vocab_size: 256,
            seed: 0,
            end_token: None,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("layers", self.layers),
            ("heads", self.heads),
            ("model_dim", self.model_dim),
            ("ffn_dim", self.ffn_dim),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::config(format!("{name} must be at least 1")));
        }
        if !self.model_dim.is_multiple_of(self.heads) {
            return Err(Error::config(format!(
                "model_dim {} is not divisible by heads {}",
                self.model_dim, self.heads
            )));
        }
        if !self.layers.is_multiple_of(2) {
            return Err(Error::config(format!(
                "layers must be even so a middle layer exists, got {}",
                self.layers
            )));
        }
        if let Some(t) = self.end_token {
            if t as usize >= self.vocab_size {
                return Err(Error::config(format!(
                    "end_token {t} outside vocabulary of {}",
                    self.vocab_size
                )));
            }
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn middle_layer(&self) -> usize {
        self.layers / 2
    }
}
