//! Image and text encoders, classifier heads and saliency maps.

mod config;
pub(crate) mod forward;
mod init;
pub mod names;
mod saliency;

pub use config::{ModelConfig, NUM_CLASSES};
pub use init::init_params;
pub use saliency::{gradcam, gradcam_map, saliency_json, text_saliency, Heatmap, TokenWeight};

use crate::error::{Error, Result};
use crate::gradnet::{ParameterStore, Tape, Tensor};

pub type EmbeddingVector = Vec<f64>;

/// Class probabilities, non-negative and summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Probabilities(pub [f64; NUM_CLASSES]);

impl Probabilities {
    /// Most probable class; ties go to the lowest index.
    pub fn argmax(&self) -> u8 {
        let mut best = 0;
        for (i, p) in self.0.iter().enumerate() {
            if *p > self.0[best] {
                best = i;
            }
        }
        best as u8
    }

    /// Probability mass of classes `>= cut`.
    pub fn tail(&self, cut: usize) -> f64 {
        self.0[cut..].iter().sum()
    }
}

/// Attention weights kept from a text forward pass.
#[derive(Debug, Clone)]
pub struct AttentionRecord {
    /// `[layer][head]` matrices of shape `[n, n]`.
    pub layers: Vec<Vec<Tensor>>,
    /// Last-layer BOS row averaged over heads, length `n`.
    pub pooled: Vec<f64>,
    pub truncated: bool,
}

pub fn encode_image(image: &Tensor, params: &ParameterStore, cfg: &ModelConfig) -> Result<EmbeddingVector> {
    let mut tape = Tape::new();
    let x = forward::image_input(&mut tape, image);
    let nodes = forward::image_stream(&mut tape, params, cfg, x)?;
    Ok(tape.value(nodes.embedding).data().to_vec())
}

pub fn encode_text(
    tokens: &[usize],
    params: &ParameterStore,
    cfg: &ModelConfig,
) -> Result<(EmbeddingVector, AttentionRecord)> {
    let mut tape = Tape::new();
    let nodes = forward::text_stream(&mut tape, params, cfg, tokens)?;
    let layers: Vec<Vec<Tensor>> = nodes
        .attention
        .iter()
        .map(|heads| heads.iter().map(|v| tape.value(*v).clone()).collect())
        .collect();
    let last = layers.last().expect("at least one layer");
    let n = last[0].shape()[1];
    let mut pooled = vec![0.0; n];
    for head in last {
        for (p, w) in pooled.iter_mut().zip(&head.data()[..n]) {
            *p += w / last.len() as f64;
        }
    }
    let record = AttentionRecord {
        layers,
        pooled,
        truncated: nodes.truncated,
    };
    Ok((tape.value(nodes.embedding).data().to_vec(), record))
}

/// Applies the classifier at `prefix` (one of the two head names).
pub fn classify(embedding: &[f64], params: &ParameterStore, prefix: &str) -> Result<Probabilities> {
    let mut tape = Tape::new();
    let e = tape.constant(Tensor::vector(embedding.to_vec()));
    let (_, probs) = forward::classifier(&mut tape, params, prefix, e)?;
    let p = tape.value(probs).data();
    if p.len() != NUM_CLASSES {
        return Err(Error::shape("classify", &[p.len()], &[NUM_CLASSES]));
    }
    Ok(Probabilities([p[0], p[1], p[2], p[3]]))
}

/// Image-stream class probabilities for one image.
pub fn predict_image(image: &Tensor, params: &ParameterStore, cfg: &ModelConfig) -> Result<Probabilities> {
    let e = encode_image(image, params, cfg)?;
    classify(&e, params, names::IMAGE_CLASSIFIER)
}
