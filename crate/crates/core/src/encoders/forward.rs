//! Tape builders for the image stream, text stream and classifiers.

use super::config::ModelConfig;
use super::names::{self, bias, weight};
use crate::error::{Error, Result};
use crate::gradnet::{ParameterStore, Tape, Tensor, Var};

const LAYER_NORM_EPS: f64 = 1e-5;

pub struct ImageNodes {
    /// Output of the last residual block, `[C, h, w]`.
    pub features: Var,
    pub embedding: Var,
}

pub struct TextNodes {
    pub embedding: Var,
    /// Attention weights per layer, per head, each `[n, n]`.
    pub attention: Vec<Vec<Var>>,
    pub truncated: bool,
}

fn conv<'a>(tape: &mut Tape<'a>, p: &'a ParameterStore, prefix: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
    let w = tape.param(p, &weight(prefix))?;
    let b = tape.param(p, &bias(prefix))?;
    tape.conv2d(x, w, b, stride, pad)
}

pub fn linear<'a>(tape: &mut Tape<'a>, p: &'a ParameterStore, prefix: &str, x: Var) -> Result<Var> {
    let w = tape.param(p, &weight(prefix))?;
    let b = tape.param(p, &bias(prefix))?;
    tape.linear(x, w, b)
}

pub fn image_stream<'a>(tape: &mut Tape<'a>, p: &'a ParameterStore, cfg: &ModelConfig, image: Var) -> Result<ImageNodes> {
    let expected = [1, cfg.image_size, cfg.image_size];
    if tape.value(image).shape() != expected {
        return Err(Error::shape("encode_image", tape.value(image).shape(), &expected));
    }
    let centered = tape.add_scalar(image, -cfg.pixel_mean)?;
    let normalized = tape.scale(centered, 1.0 / cfg.pixel_std)?;
    let stem = conv(tape, p, names::STEM, normalized, cfg.stem_stride, 1)?;
    let mut h = tape.relu(stem)?;
    for i in 0..cfg.block_channels.len() {
        let stride = if i == 0 { 1 } else { 2 };
        let c1 = conv(tape, p, &names::block(i, "conv1"), h, stride, 1)?;
        let a1 = tape.relu(c1)?;
        let c2 = conv(tape, p, &names::block(i, "conv2"), a1, 1, 1)?;
        let shortcut_name = names::block(i, "shortcut");
        let shortcut = if p.index_of(&weight(&shortcut_name)).is_ok() {
            conv(tape, p, &shortcut_name, h, stride, 0)?
        } else {
            h
        };
        let sum = tape.add(c2, shortcut)?;
        h = tape.relu(sum)?;
    }
    let pooled = tape.global_avg_pool(h)?;
    let embedding = linear(tape, p, names::IMAGE_PROJ, pooled)?;
    Ok(ImageNodes { features: h, embedding })
}

pub fn text_stream<'a>(tape: &mut Tape<'a>, p: &'a ParameterStore, cfg: &ModelConfig, tokens: &[usize]) -> Result<TextNodes> {
    if tokens.is_empty() {
        return Err(Error::Parameter("empty token sequence".into()));
    }
    let truncated = tokens.len() > cfg.max_seq_len;
    let tokens = &tokens[..tokens.len().min(cfg.max_seq_len)];
    let n = tokens.len();
    let dh = cfg.head_dim();

    let tok_table = tape.param(p, names::TOKEN_EMBEDDING)?;
    let pos_table = tape.param(p, names::POSITION_EMBEDDING)?;
    let tok = tape.embedding(tok_table, tokens)?;
    let positions: Vec<usize> = (0..n).collect();
    let pos = tape.embedding(pos_table, &positions)?;
    let mut h = tape.add(tok, pos)?;

    let mut attention = Vec::with_capacity(cfg.text_layers);
    let scale = 1.0 / (dh as f64).sqrt();
    for l in 0..cfg.text_layers {
        let q = linear(tape, p, &names::layer(l, "q"), h)?;
        let k = linear(tape, p, &names::layer(l, "k"), h)?;
        let v = linear(tape, p, &names::layer(l, "v"), h)?;
        let mut heads = Vec::with_capacity(cfg.text_heads);
        let mut weights = Vec::with_capacity(cfg.text_heads);
        for head in 0..cfg.text_heads {
            let qh = tape.cols(q, head * dh, dh)?;
            let kh = tape.cols(k, head * dh, dh)?;
            let vh = tape.cols(v, head * dh, dh)?;
            let scores = tape.matmul(qh, kh, true)?;
            let scores = tape.scale(scores, scale)?;
            let attn = tape.softmax_rows(scores)?;
            weights.push(attn);
            heads.push(tape.matmul(attn, vh, false)?);
        }
        attention.push(weights);
        let mixed = tape.concat_cols(&heads)?;
        let projected = linear(tape, p, &names::layer(l, "out"), mixed)?;
        let res = tape.add(h, projected)?;
        h = layer_norm(tape, p, &names::layer(l, "ln1"), res)?;

        let f1 = linear(tape, p, &names::layer(l, "ffn1"), h)?;
        let f1 = tape.relu(f1)?;
        let f2 = linear(tape, p, &names::layer(l, "ffn2"), f1)?;
        let res = tape.add(h, f2)?;
        h = layer_norm(tape, p, &names::layer(l, "ln2"), res)?;
    }
    let pooled = tape.row(h, 0)?;
    let embedding = linear(tape, p, names::TEXT_PROJ, pooled)?;
    Ok(TextNodes {
        embedding,
        attention,
        truncated,
    })
}

fn layer_norm<'a>(tape: &mut Tape<'a>, p: &'a ParameterStore, prefix: &str, x: Var) -> Result<Var> {
    let g = tape.param(p, &format!("{prefix}.gamma"))?;
    let b = tape.param(p, &format!("{prefix}.beta"))?;
    tape.layer_norm_rows(x, g, b, LAYER_NORM_EPS)
}

/// Affine map to 4 logits followed by softmax. Returns (logits, probs).
pub fn classifier<'a>(tape: &mut Tape<'a>, p: &'a ParameterStore, prefix: &str, embedding: Var) -> Result<(Var, Var)> {
    let expected = p.get(&weight(prefix))?.shape()[0];
    if tape.value(embedding).shape() != [expected] {
        return Err(Error::shape("classify", tape.value(embedding).shape(), &[expected]));
    }
    let logits = linear(tape, p, prefix, embedding)?;
    let probs = tape.softmax_rows(logits)?;
    Ok((logits, probs))
}

pub(crate) fn image_input<'a>(tape: &mut Tape<'a>, image: &'a Tensor) -> Var {
    tape.constant_ref(image)
}
