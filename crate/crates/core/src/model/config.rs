use alloc::format;

use crate::error::{Error, Result};

/// Architecture hyperparameters of the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub d_ffn: usize,
    pub n_heads: usize,
    pub head_dim: usize,
    pub n_layers: usize,
    pub max_seq_len: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d_model", self.d_model),
            ("d_ffn", self.d_ffn),
            ("n_heads", self.n_heads),
            ("head_dim", self.head_dim),
            ("n_layers", self.n_layers),
            ("max_seq_len", self.max_seq_len),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.vocab_size < 2 {
            return Err(Error::Config(format!("vocab_size must be at least 2, got {}", self.vocab_size)));
        }
        if self.n_heads * self.head_dim != self.d_model {
            return Err(Error::Config(format!(
                "n_heads ({}) x head_dim ({}) != d_model ({})",
                self.n_heads, self.head_dim, self.d_model
            )));
        }
        Ok(())
    }

    /// Parameters of one transformer block.
    pub fn layer_params(&self) -> usize {
        4 * self.d_model * self.d_model + 3 * self.d_model * self.d_ffn + 2 * self.d_model
    }

    /// Non-embedding parameter count: all blocks plus the final norm.
    /// Embedding and output head are excluded.
    pub fn nonembed_params(&self) -> usize {
        self.n_layers * self.layer_params() + self.d_model
    }

    pub fn total_params(&self) -> usize {
        self.nonembed_params() + 2 * self.vocab_size * self.d_model
    }

    pub fn with_layers(self, n_layers: usize) -> Self {
        ModelConfig { n_layers, ..self }
    }

    /// Width scaled by `g`: whole heads are added, `head_dim` is kept.
    pub fn widened(self, g: usize) -> Self {
        ModelConfig { d_model: self.d_model * g, d_ffn: self.d_ffn * g, n_heads: self.n_heads * g, ..self }
    }
}
