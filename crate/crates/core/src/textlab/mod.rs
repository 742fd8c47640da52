//! Rule-based severity labeling of free-text reports.
//!
//! The pipeline is section extraction, tokenization, negation scoping,
//! keyword matching and a max-severity resolution over the matches.

mod corpus;
mod matching;
pub mod negation;
mod rules;
mod sections;
mod tokenize;

pub use corpus::{label_corpus, labels_csv, read_reports, CorpusLabels, DocumentLabel, Failure, LabelSummary, ReportInput};
pub use matching::{match_keywords, resolve_label, Evidence, LabelResult};
pub use negation::{detect_negation, detect_negation_words};
pub use rules::{KeywordRule, Ruleset};
pub use sections::extract_sections;
pub use tokenize::{tokenize, tokenize_words, Token};

use crate::error::Result;

/// A report after section selection and tokenization.
#[derive(Debug, Clone)]
pub struct ReportDocument {
    pub id: String,
    pub raw_text: String,
    pub selected_text: String,
    pub tokens: Vec<Token>,
}

impl ReportDocument {
    pub fn parse(id: impl Into<String>, raw_text: impl Into<String>) -> Result<Self> {
        let raw_text = raw_text.into();
        let selected_text = extract_sections(&raw_text)?;
        let tokens = tokenize(&selected_text);
        Ok(ReportDocument {
            id: id.into(),
            raw_text,
            selected_text,
            tokens,
        })
    }

    pub fn words(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }

    pub fn label(&self, ruleset: &Ruleset) -> LabelResult {
        let words = self.words();
        let negated = negation::detect_negation_words(&words);
        resolve_label(match_keywords(&words, &negated, ruleset))
    }
}

/// Full labeling pipeline for one raw report.
pub fn label_text(raw_text: &str, ruleset: &Ruleset) -> Result<LabelResult> {
    Ok(ReportDocument::parse("", raw_text)?.label(ruleset))
}
