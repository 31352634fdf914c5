use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture hyperparameters.
///
/// `local_layers` encoder layers attend only within a turn, followed by
/// `global_layers` encoder layers that attend across the whole history.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub local_layers: usize,
    pub global_layers: usize,
    pub decoder_layers: usize,
    pub d_ff: usize,
    /// Token budget for both the history and each candidate sequence.
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            vocab_size: 512,
            d_model: 64,
            n_heads: 4,
            local_layers: 2,
            global_layers: 2,
            decoder_layers: 2,
            d_ff: 256,
            max_len: 128,
        }
    }
}

impl ModelConfig {
    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn encoder_layers(&self) -> usize {
        self.local_layers + self.global_layers
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(format!("model: {m}")));
        if self.vocab_size == 0 || self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 {
            return fail("vocab_size, d_model, n_heads and d_ff must be positive");
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return fail("d_model must be divisible by n_heads");
        }
        if self.encoder_layers() == 0 {
            return fail("local_layers + global_layers must be at least 1");
        }
        if self.decoder_layers == 0 {
            return fail("decoder_layers must be at least 1");
        }
        if self.max_len < 3 {
            return fail("max_len must be at least 3");
        }
        Ok(())
    }
}
