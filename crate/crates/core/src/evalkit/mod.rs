//! Ordinal evaluation: dichotomized AUCs, macro-F1 and confusion counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoders::{predict_image, ModelConfig, Probabilities, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::synthgen::PairedExample;
use crate::gradnet::ParameterStore;
use crate::trainkit::Checkpoint;

pub const CUTS: [usize; 3] = [1, 2, 3];

/// Probability mass of the classes at or above `cut`.
pub fn dichotomize(probs: &Probabilities, cut: usize) -> Result<f64> {
    if !CUTS.contains(&cut) {
        return Err(Error::Parameter(format!("cut {cut} outside 1..=3")));
    }
    Ok(probs.tail(cut))
}

/// Mann-Whitney estimate of the ROC area; ties count one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape("auc", &[scores.len()], &[labels.len()]));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Parameter("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let n_pos = labels.iter().filter(|l| **l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::DegenerateLabels("auc needs both classes"));
    }
    // Sum of midranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

pub type Confusion = [[usize; NUM_CLASSES]; NUM_CLASSES];

/// Rows are gold classes, columns predictions.
pub fn confusion(predicted: &[u8], gold: &[u8]) -> Result<Confusion> {
    if predicted.len() != gold.len() {
        return Err(Error::shape("confusion", &[predicted.len()], &[gold.len()]));
    }
    let mut m = [[0; NUM_CLASSES]; NUM_CLASSES];
    for (&p, &g) in predicted.iter().zip(gold) {
        if p as usize >= NUM_CLASSES || g as usize >= NUM_CLASSES {
            return Err(Error::Parameter(format!("class ({p}, {g}) outside 0..4")));
        }
        m[g as usize][p as usize] += 1;
    }
    Ok(m)
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Unweighted mean of per-class F1 over all four classes; a class that never
/// occurs in either list scores 0.
pub fn macro_f1(predicted: &[u8], gold: &[u8]) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::Parameter("macro_f1 of an empty list".into()));
    }
    let m = confusion(predicted, gold)?;
    let mut total = 0.0;
    for c in 0..NUM_CLASSES {
        let tp = m[c][c];
        let predicted_c: usize = (0..NUM_CLASSES).map(|g| m[g][c]).sum();
        let gold_c: usize = m[c].iter().sum();
        let p = ratio(tp, predicted_c);
        let r = ratio(tp, gold_c);
        total += if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    }
    Ok(total / NUM_CLASSES as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// `None` when one side of the cut has no examples.
    pub auc_0_vs_123: Option<f64>,
    pub auc_01_vs_23: Option<f64>,
    pub auc_012_vs_3: Option<f64>,
    pub macro_f1: f64,
    pub confusion: Confusion,
    pub n_examples: usize,
}

impl EvalReport {
    pub fn aucs(&self) -> [Option<f64>; 3] {
        [self.auc_0_vs_123, self.auc_01_vs_23, self.auc_012_vs_3]
    }

    /// Mean of the available AUCs.
    pub fn mean_auc(&self) -> Option<f64> {
        let present: Vec<f64> = self.aucs().into_iter().flatten().collect();
        (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// Aligned table with one row per entry of `rows`.
    pub fn table(rows: &[(String, EvalReport)]) -> String {
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("model".len());
        let mut out = format!(
            "{:<width$}  {:>15}  {:>15}  {:>15}  {:>8}\n",
            "model", "AUC (0 vs 123)", "AUC (01 vs 23)", "AUC (012 vs 3)", "macro-F1"
        );
        for (name, r) in rows {
            let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
            out += &format!(
                "{:<width$}  {:>15}  {:>15}  {:>15}  {:>8.4}\n",
                name,
                cell(r.auc_0_vs_123),
                cell(r.auc_01_vs_23),
                cell(r.auc_012_vs_3),
                r.macro_f1
            );
        }
        out
    }
}

/// Report from per-example probabilities and gold classes.
pub fn evaluate_predictions(probs: &[Probabilities], gold: &[u8]) -> Result<EvalReport> {
    if probs.len() != gold.len() {
        return Err(Error::shape("evaluate", &[probs.len()], &[gold.len()]));
    }
    if gold.is_empty() {
        return Err(Error::Parameter("evaluation set is empty".into()));
    }
    let mut aucs = [None; 3];
    for (slot, cut) in aucs.iter_mut().zip(CUTS) {
        let scores: Vec<f64> = probs.iter().map(|p| p.tail(cut)).collect();
        let labels: Vec<bool> = gold.iter().map(|&g| g as usize >= cut).collect();
        *slot = match auc(&scores, &labels) {
            Ok(v) => Some(v),
            Err(Error::DegenerateLabels(_)) => None,
            Err(e) => return Err(e),
        };
    }
    let predicted: Vec<u8> = probs.iter().map(Probabilities::argmax).collect();
    Ok(EvalReport {
        auc_0_vs_123: aucs[0],
        auc_01_vs_23: aucs[1],
        auc_012_vs_3: aucs[2],
        macro_f1: macro_f1(&predicted, gold)?,
        confusion: confusion(&predicted, gold)?,
        n_examples: gold.len(),
    })
}

/// Image-only inference over the labeled members of `examples`.
pub fn evaluate(checkpoint: &Checkpoint, examples: &[PairedExample]) -> Result<EvalReport> {
    evaluate_params(&checkpoint.params, &checkpoint.config.model, examples)
}

pub fn evaluate_params(params: &ParameterStore, model: &ModelConfig, examples: &[PairedExample]) -> Result<EvalReport> {
    let labeled: Vec<&PairedExample> = examples.iter().filter(|e| e.is_labeled()).collect();
    let probs: Vec<Probabilities> = labeled
        .par_iter()
        .map(|e| predict_image(&e.image, params, model))
        .collect::<Result<_>>()?;
    let gold: Vec<u8> = labeled.iter().map(|e| e.label().expect("labeled")).collect();
    evaluate_predictions(&probs, &gold)
}
