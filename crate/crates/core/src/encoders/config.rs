use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Architecture sizes for both encoders and classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub image_size: usize,
    /// Pixels enter the stem as `(x - pixel_mean) / pixel_std`.
    pub pixel_mean: f64,
    pub pixel_std: f64,
    pub stem_channels: usize,
    pub stem_stride: usize,
    /// Output channels of each residual block; the first block keeps the
    /// stem resolution, every later block halves it.
    pub block_channels: Vec<usize>,
    pub embed_dim: usize,
    /// Filled from the dataset vocabulary at training time.
    pub vocab_size: usize,
    pub text_dim: usize,
    pub text_heads: usize,
    pub text_layers: usize,
    pub text_ffn_dim: usize,
    pub max_seq_len: usize,
}

pub const NUM_CLASSES: usize = 4;

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            image_size: 32,
            pixel_mean: 0.25,
            pixel_std: 0.1,
            stem_channels: 4,
            stem_stride: 2,
            block_channels: vec![4, 8, 16],
            embed_dim: 64,
            vocab_size: 0,
            text_dim: 16,
            text_heads: 2,
            text_layers: 2,
            text_ffn_dim: 32,
            max_seq_len: 64,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.image_size < 8 {
            problems.push("image_size must be at least 8");
        }
        if !(self.pixel_std > 0.0 && self.pixel_std.is_finite() && self.pixel_mean.is_finite()) {
            problems.push("pixel_std must be positive and pixel_mean finite");
        }
        if self.stem_channels == 0 || self.block_channels.contains(&0) {
            problems.push("channel counts must be positive");
        }
        if self.block_channels.is_empty() {
            problems.push("at least one residual block is required");
        }
        if self.stem_stride == 0 {
            problems.push("stem_stride must be positive");
        }
        if self.embed_dim == 0 || self.text_dim == 0 || self.text_ffn_dim == 0 {
            problems.push("dimensions must be positive");
        }
        if self.text_heads == 0 || !self.text_dim.is_multiple_of(self.text_heads) {
            problems.push("text_dim must be a positive multiple of text_heads");
        }
        if self.text_layers == 0 {
            problems.push("text_layers must be positive");
        }
        if self.max_seq_len == 0 {
            problems.push("max_seq_len must be positive");
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn head_dim(&self) -> usize {
        self.text_dim / self.text_heads
    }
}
