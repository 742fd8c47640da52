//! Similarity measures, the ranking and classification losses, and impostor
//! sampling.

mod batch;

pub use batch::{finite_diff_check, loss_and_gradients, total_loss, Batch, BatchItem, LossBreakdown, LossOutput};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Stream;

/// Floor applied to probabilities before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    Dot,
    NegL2,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Hinge against an impostor image and an impostor report.
    Ranking,
    /// Maximize matched-pair similarity only.
    Direct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SimilarityKind {
    pub measure: Similarity,
    pub mode: Mode,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    EmbeddingOnly,
    #[default]
    Joint,
}

/// Which encoders take part in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Streams {
    Joint,
    /// Image encoder and image classifier only, trained with cross-entropy.
    ImageOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub similarity: Similarity,
    pub mode: Mode,
    pub unlabeled_margin: f64,
    pub streams: Streams,
    /// Set by the trainer for each phase.
    #[serde(skip)]
    pub phase: Phase,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            similarity: Similarity::Dot,
            mode: Mode::Ranking,
            unlabeled_margin: 0.5,
            streams: Streams::Joint,
            phase: Phase::Joint,
        }
    }
}

impl ObjectiveConfig {
    pub fn kind(&self) -> SimilarityKind {
        SimilarityKind {
            measure: self.similarity,
            mode: self.mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.unlabeled_margin > 0.0 && self.unlabeled_margin.is_finite()) {
            return Err(Error::Config(format!(
                "unlabeled_margin must be positive, got {}",
                self.unlabeled_margin
            )));
        }
        Ok(())
    }
}

fn check_len(op: &'static str, a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::shape(op, &[a.len()], &[b.len()]));
    }
    Ok(())
}

pub fn similarity(a: &[f64], b: &[f64], measure: Similarity) -> Result<f64> {
    check_len("similarity", a, b)?;
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    match measure {
        Similarity::Dot => Ok(dot),
        Similarity::NegL2 => Ok(-a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()),
        Similarity::Cosine => {
            let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                return Err(Error::DegenerateInput("cosine similarity of a zero vector"));
            }
            Ok(dot / (na * nb))
        }
    }
}

/// `|y_j - y_s|` when both labels are known, the configured constant otherwise.
pub fn margin(y_j: Option<u8>, y_s: Option<u8>, cfg: &ObjectiveConfig) -> f64 {
    match (y_j, y_s) {
        (Some(a), Some(b)) => (a as f64 - b as f64).abs(),
        _ => cfg.unlabeled_margin,
    }
}

pub fn ranking_loss(
    i_j: &[f64],
    r_j: &[f64],
    i_s: &[f64],
    r_s: &[f64],
    eta: f64,
    kind: SimilarityKind,
) -> Result<f64> {
    let matched = similarity(i_j, r_j, kind.measure)?;
    if kind.mode == Mode::Direct {
        return Ok(-matched);
    }
    let wrong_report = similarity(i_j, r_s, kind.measure)?;
    let wrong_image = similarity(i_s, r_j, kind.measure)?;
    Ok((wrong_report - matched + eta).max(0.0) + (wrong_image - matched + eta).max(0.0))
}

pub fn cross_entropy_pair(p_img: &[f64], p_txt: &[f64], y: u8) -> Result<f64> {
    let y = y as usize;
    if y >= p_img.len() || y >= p_txt.len() {
        return Err(Error::Parameter(format!("label {y} outside the class range")));
    }
    Ok(-p_img[y].max(PROB_FLOOR).ln() - p_txt[y].max(PROB_FLOOR).ln())
}

/// Impostor assignment for one epoch: member `j` is paired with `perm[j]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImpostorMap {
    pub epoch: usize,
    pub perm: Vec<usize>,
}

impl ImpostorMap {
    pub fn impostor(&self, j: usize) -> usize {
        self.perm[j]
    }
}

/// Uniform permutation of `0..n`. Fixed points are kept.
pub fn sample_impostor_map(n: usize, epoch: usize, rng: &mut Stream) -> Result<ImpostorMap> {
    if n == 0 {
        return Err(Error::Parameter("impostor map over an empty set".into()));
    }
    Ok(ImpostorMap {
        epoch,
        perm: rng.permutation(n),
    })
}

#[cfg(test)]
mod tests;
