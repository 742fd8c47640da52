use serde::Serialize;

use super::config::ModelConfig;
use super::forward::{classifier, image_input, image_stream};
use super::names;
use super::encode_text;
use crate::error::{Error, Result};
use crate::gradnet::{ParameterStore, Tape, Tensor};

/// Grey-level map in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

/// Channel weights are the spatial means of the gradients; the map is the
/// rectified weighted sum of activation channels, min-max normalized. A map
/// that is zero everywhere stays zero; a constant positive map becomes 1.
pub fn gradcam_map(activations: &Tensor, gradients: &Tensor) -> Result<Heatmap> {
    if activations.shape() != gradients.shape() || activations.shape().len() != 3 {
        return Err(Error::shape("gradcam", activations.shape(), gradients.shape()));
    }
    let &[c, h, w] = activations.shape() else { unreachable!() };
    let hw = h * w;
    let mut cam = vec![0.0; hw];
    for ch in 0..c {
        let g = &gradients.data()[ch * hw..(ch + 1) * hw];
        let weight = g.iter().sum::<f64>() / hw as f64;
        for (m, a) in cam.iter_mut().zip(&activations.data()[ch * hw..(ch + 1) * hw]) {
            *m += weight * a;
        }
    }
    for m in &mut cam {
        *m = m.max(0.0);
    }
    let lo = cam.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cam.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        for m in &mut cam {
            *m = (*m - lo) / (hi - lo);
        }
    } else {
        let fill = if hi > 0.0 { 1.0 } else { 0.0 };
        cam.fill(fill);
    }
    Ok(Heatmap {
        height: h,
        width: w,
        values: cam,
    })
}

impl Heatmap {
    pub fn upsample_nearest(&self, height: usize, width: usize) -> Heatmap {
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            let sy = y * self.height / height;
            for x in 0..width {
                let sx = x * self.width / width;
                values.push(self.values[sy * self.width + sx]);
            }
        }
        Heatmap { height, width, values }
    }

    /// Binary portable graymap, maxval 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
        out
    }
}

/// Grad-CAM of the image stream for `class_index`, at input resolution.
pub fn gradcam(image: &Tensor, params: &ParameterStore, cfg: &ModelConfig, class_index: usize) -> Result<Heatmap> {
    if class_index >= super::NUM_CLASSES {
        return Err(Error::Parameter(format!("class index {class_index} outside 0..4")));
    }
    let mut tape = Tape::new();
    let x = image_input(&mut tape, image);
    let nodes = image_stream(&mut tape, params, cfg, x)?;
    let (logits, _) = classifier(&mut tape, params, names::IMAGE_CLASSIFIER, nodes.embedding)?;
    let score = tape.pick(logits, class_index)?;
    let grads = tape.backward(score)?;
    let acts = tape.value(nodes.features);
    let g = grads
        .get(nodes.features)
        .cloned()
        .unwrap_or_else(|| Tensor::zeros(acts.shape()));
    let map = gradcam_map(acts, &g)?;
    Ok(map.upsample_nearest(cfg.image_size, cfg.image_size))
}

/// BOS-query attention of the last layer, averaged over heads.
pub fn text_saliency(tokens: &[usize], params: &ParameterStore, cfg: &ModelConfig) -> Result<Vec<f64>> {
    let (_, record) = encode_text(tokens, params, cfg)?;
    Ok(record.pooled)
}

#[derive(Debug, Serialize)]
pub struct TokenWeight {
    pub token: String,
    pub weight: f64,
}

/// JSON list of `{token, weight}`.
pub fn saliency_json(words: &[String], weights: &[f64]) -> String {
    let items: Vec<TokenWeight> = words
        .iter()
        .zip(weights)
        .map(|(t, w)| TokenWeight {
            token: t.clone(),
            weight: *w,
        })
        .collect();
    serde_json::to_string_pretty(&items).expect("serializable")
}
