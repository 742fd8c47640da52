use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{label_text, LabelResult, Ruleset};
use crate::error::{Error, Result};

/// One input report as read from disk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportInput {
    pub id: String,
    pub text: String,
}

#[derive(Debug)]
pub struct DocumentLabel {
    pub id: String,
    pub outcome: Result<LabelResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LabelSummary {
    pub documents: usize,
    pub per_level: [usize; 4],
    pub unlabeled: usize,
    pub failures: Vec<Failure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub id: String,
    pub error: String,
}

#[derive(Debug)]
pub struct CorpusLabels {
    pub documents: Vec<DocumentLabel>,
    pub summary: LabelSummary,
}

/// Labels every document; a failing document is recorded and skipped.
pub fn label_corpus(documents: &[ReportInput], ruleset: &Ruleset) -> CorpusLabels {
    let labeled: Vec<DocumentLabel> = documents
        .par_iter()
        .map(|doc| DocumentLabel {
            id: doc.id.clone(),
            outcome: label_text(&doc.text, ruleset),
        })
        .collect();

    let mut summary = LabelSummary {
        documents: labeled.len(),
        ..Default::default()
    };
    for doc in &labeled {
        match &doc.outcome {
            Ok(res) => match res.level {
                Some(l) => summary.per_level[l as usize] += 1,
                None => summary.unlabeled += 1,
            },
            Err(e) => summary.failures.push(Failure {
                id: doc.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    CorpusLabels {
        documents: labeled,
        summary,
    }
}

/// Reads JSON lines of `{id, text}` records, or every `.txt` file in a
/// directory (id = file stem, sorted by file name).
pub fn read_reports(path: &Path) -> Result<Vec<ReportInput>> {
    if path.is_dir() {
        let mut entries: Vec<_> = std::fs::read_dir(path)
            .map_err(|e| Error::file(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "txt"))
            .collect();
        entries.sort();
        return entries
            .into_iter()
            .map(|p| {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::file(&p, e))?;
                let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                Ok(ReportInput { id, text })
            })
            .collect();
    }

    let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            serde_json::from_str(line)
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), n + 1)))
        })
        .collect()
}

/// CSV with columns `id,level,evidence_count`. Unlabeled documents have an
/// empty level; failed documents are left out (they are in the summary).
pub fn labels_csv(labels: &CorpusLabels) -> String {
    let mut out = String::from("id,level,evidence_count\n");
    for doc in &labels.documents {
        if let Ok(res) = &doc.outcome {
            let level = res.level.map(|l| l.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{}\n", csv_field(&doc.id), level, res.evidence.len()));
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
