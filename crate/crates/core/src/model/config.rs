//! Model hyperparameters.

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Shared source/target vocabulary size, including reserved ids.
    pub vocab_size: usize,
    /// Encoder and decoder each get this many layers.
    pub num_layers: usize,
    pub model_dim: usize,
    pub num_heads: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub dropout_rate: f64,
    pub layernorm_eps: f64,
    pub label_smoothing: f64,
}

impl ModelConfig {
    /// CPU-minutes scale: trains the synthetic corpora in minutes.
    pub fn desk_scale(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            num_layers: 2,
            model_dim: 64,
            num_heads: 4,
            ffn_dim: 128,
            max_seq_len: 64,
            dropout_rate: 0.0,
            layernorm_eps: 1e-5,
            label_smoothing: 0.0,
        }
    }

    /// The architecture used for the full-size corpora: 3 layers at width
    /// 500, sequences to 200 tokens. Head count and FFN width are not pinned
    /// by that setup; 10 heads and 2048 are this crate's defaults.
    pub fn paper_scale(vocab_size: usize) -> Self {
        ModelConfig {
            vocab_size,
            num_layers: 3,
            model_dim: 500,
            num_heads: 10,
            ffn_dim: 2048,
            max_seq_len: 200,
            dropout_rate: 0.1,
            layernorm_eps: 1e-5,
            label_smoothing: 0.0,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.vocab_size < 4 {
            return Err(ModelError::Config(
                "vocab must include the four reserved ids".into(),
            ));
        }
        if self.num_layers == 0 || self.model_dim == 0 || self.num_heads == 0 || self.ffn_dim == 0
        {
            return Err(ModelError::Config("zero-sized dimension".into()));
        }
        if self.model_dim % self.num_heads != 0 {
            return Err(ModelError::Config(format!(
                "model_dim {} not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if self.max_seq_len < 2 {
            return Err(ModelError::Config("max_seq_len too small".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::Config(format!(
                "dropout_rate {} outside [0,1)",
                self.dropout_rate
            )));
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            return Err(ModelError::Config("label_smoothing outside [0,1)".into()));
        }
        if self.layernorm_eps <= 0.0 {
            return Err(ModelError::Config("layernorm_eps must be positive".into()));
        }
        Ok(())
    }
}
