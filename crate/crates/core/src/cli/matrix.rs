//! Trains and evaluates several model variants on one shared dataset.

use crate::error::{Error, Result};
use crate::evalkit::{evaluate, EvalReport};
use crate::objective::{Mode, Similarity, Streams};
use crate::synthgen::DatasetSplit;
use crate::trainkit::{train, ExperimentConfig, TrainOutcome};

pub const VARIANTS: [&str; 8] = [
    "image-only",
    "dot",
    "l2",
    "cosine",
    "ranking-dot",
    "ranking-l2",
    "ranking-cosine",
    "ranking-dot-semi",
];

/// Applies a variant to `base`. Only the `-semi` variant keeps the
/// embedding-only phase over unlabeled pairs.
pub fn variant_config(base: &ExperimentConfig, name: &str) -> Result<ExperimentConfig> {
    let mut c = base.clone();
    let (mode, similarity) = match name {
        "image-only" => {
            c.objective.streams = Streams::ImageOnly;
            c.train.phase1_epochs = 0;
            return Ok(c);
        }
        "dot" => (Mode::Direct, Similarity::Dot),
        "l2" => (Mode::Direct, Similarity::NegL2),
        "cosine" => (Mode::Direct, Similarity::Cosine),
        "ranking-dot" | "ranking-dot-semi" => (Mode::Ranking, Similarity::Dot),
        "ranking-l2" => (Mode::Ranking, Similarity::NegL2),
        "ranking-cosine" => (Mode::Ranking, Similarity::Cosine),
        other => return Err(Error::Config(format!("unknown variant `{other}`"))),
    };
    c.objective.streams = Streams::Joint;
    c.objective.mode = mode;
    c.objective.similarity = similarity;
    if name != "ranking-dot-semi" {
        c.train.phase1_epochs = 0;
    }
    Ok(c)
}

/// Comma-separated variant list; every name must be known.
pub fn parse_variants(list: &str) -> Result<Vec<String>> {
    let names: Vec<String> = list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if names.is_empty() {
        return Err(Error::Config("no variants given".into()));
    }
    let unknown: Vec<&str> = names.iter().map(String::as_str).filter(|n| !VARIANTS.contains(n)).collect();
    if !unknown.is_empty() {
        return Err(Error::Config(format!(
            "unknown variant(s) {}; expected a subset of {}",
            unknown.join(", "),
            VARIANTS.join(", ")
        )));
    }
    Ok(names)
}

/// The checkpoint scored on held-out data: best by validation AUC when a
/// validation split exists, otherwise the final one.
pub fn selected(outcome: &TrainOutcome) -> &crate::trainkit::Checkpoint {
    outcome.best.as_ref().unwrap_or(&outcome.checkpoint)
}

#[derive(Debug, Clone)]
pub struct MatrixRow {
    pub variant: String,
    pub per_seed: Vec<EvalReport>,
    pub mean: EvalReport,
}

fn mean_report(reports: &[EvalReport]) -> EvalReport {
    let n = reports.len() as f64;
    let avg = |f: fn(&EvalReport) -> Option<f64>| -> Option<f64> {
        reports.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
    };
    let mut confusion = [[0; 4]; 4];
    for r in reports {
        for (row, add) in confusion.iter_mut().zip(&r.confusion) {
            for (c, a) in row.iter_mut().zip(add) {
                *c += a;
            }
        }
    }
    EvalReport {
        auc_0_vs_123: avg(|r| r.auc_0_vs_123),
        auc_01_vs_23: avg(|r| r.auc_01_vs_23),
        auc_012_vs_3: avg(|r| r.auc_012_vs_3),
        macro_f1: reports.iter().map(|r| r.macro_f1).sum::<f64>() / n,
        confusion,
        n_examples: reports.iter().map(|r| r.n_examples).sum(),
    }
}

/// Trains every variant for every seed and scores it on the test pool.
/// `ranking-dot-semi` is skipped when the dataset has no unlabeled pairs.
pub fn run_experiment_matrix(
    base: &ExperimentConfig,
    data: &DatasetSplit,
    variants: &[String],
    seeds: &[u64],
    mut progress: impl FnMut(&str, u64, &EvalReport),
) -> Result<Vec<MatrixRow>> {
    if seeds.is_empty() {
        return Err(Error::Config("no seeds given".into()));
    }
    if data.test.is_empty() {
        return Err(Error::Config("the dataset has no test pool to evaluate on".into()));
    }
    let mut rows = Vec::new();
    for name in variants {
        if name == "ranking-dot-semi" && data.unlabeled.is_empty() {
            continue;
        }
        let mut per_seed = Vec::new();
        for &seed in seeds {
            let mut cfg = variant_config(base, name)?;
            cfg.train.seed = seed;
            let outcome = train(&cfg, data)?;
            let report = evaluate(selected(&outcome), &data.test)?;
            progress(name, seed, &report);
            per_seed.push(report);
        }
        rows.push(MatrixRow {
            variant: name.clone(),
            mean: mean_report(&per_seed),
            per_seed,
        });
    }
    Ok(rows)
}

pub fn matrix_table(rows: &[MatrixRow]) -> String {
    let named: Vec<(String, EvalReport)> = rows.iter().map(|r| (r.variant.clone(), r.mean.clone())).collect();
    EvalReport::table(&named)
}

/// Whether mean AUC ranks semi-supervised above joint above image-only;
/// `None` unless all three rows are present.
pub fn strict_ordering(rows: &[MatrixRow]) -> Option<bool> {
    let auc = |name: &str| rows.iter().find(|r| r.variant == name).and_then(|r| r.mean.mean_auc());
    let (semi, joint, image) = (auc("ranking-dot-semi")?, auc("ranking-dot")?, auc("image-only")?);
    Some(semi > joint && joint > image)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_map_to_objectives() {
        let base = ExperimentConfig::default();
        let c = variant_config(&base, "image-only").unwrap();
        assert_eq!((c.objective.streams, c.train.phase1_epochs), (Streams::ImageOnly, 0));
        let c = variant_config(&base, "l2").unwrap();
        assert_eq!((c.objective.mode, c.objective.similarity), (Mode::Direct, Similarity::NegL2));
        let c = variant_config(&base, "ranking-dot-semi").unwrap();
        assert_eq!(c.train.phase1_epochs, base.train.phase1_epochs);
        assert_eq!(variant_config(&base, "ranking-cosine").unwrap().train.phase1_epochs, 0);
        assert!(variant_config(&base, "bogus").is_err());
    }

    #[test]
    fn variant_lists_are_checked() {
        assert_eq!(parse_variants("dot, ranking-dot").unwrap(), vec!["dot", "ranking-dot"]);
        assert!(parse_variants("dot,nope").is_err());
        assert!(parse_variants("").is_err());
    }
}
