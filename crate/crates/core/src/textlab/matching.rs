use std::collections::BTreeSet;

use serde::Serialize;

use super::rules::{KeywordRule, Ruleset};

/// One rule firing at a token span `[start, end)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Evidence {
    pub rule: usize,
    pub level: u8,
    pub phrase: String,
    pub start: usize,
    pub end: usize,
    pub negated: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelResult {
    pub level: Option<u8>,
    pub evidence: Vec<Evidence>,
}

fn eligible(rule: &KeywordRule, words: &[&str], at: usize, negated: &BTreeSet<usize>) -> Option<bool> {
    let len = rule.phrase.len();
    if at + len > words.len() {
        return None;
    }
    if !rule.phrase.iter().zip(&words[at..at + len]).all(|(p, w)| p == w) {
        return None;
    }
    let is_negated = (at..at + len).any(|i| negated.contains(&i));
    (is_negated == rule.requires_negation).then_some(is_negated)
}

/// Left-to-right, longest-phrase-first, non-overlapping rule matching.
///
/// A phrase occurrence whose negation status does not fit its rule is not a
/// match at all, so it neither labels nor blocks shorter phrases inside it.
pub fn match_keywords(words: &[&str], negated: &BTreeSet<usize>, ruleset: &Ruleset) -> Vec<Evidence> {
    let mut evidence = Vec::new();
    let mut i = 0;
    while i < words.len() {
        let best = ruleset
            .rules()
            .iter()
            .enumerate()
            .filter_map(|(idx, rule)| eligible(rule, words, i, negated).map(|neg| (idx, rule, neg)))
            // max_by_key keeps the last maximum; reverse so the earliest rule wins ties.
            .rev()
            .max_by_key(|(_, rule, _)| rule.phrase.len());
        match best {
            Some((idx, rule, neg)) => {
                let end = i + rule.phrase.len();
                evidence.push(Evidence {
                    rule: idx,
                    level: rule.level,
                    phrase: rule.phrase_text(),
                    start: i,
                    end,
                    negated: neg,
                });
                i = end;
            }
            None => i += 1,
        }
    }
    evidence
}

/// Worst-finding policy: the highest matched level wins.
pub fn resolve_label(evidence: Vec<Evidence>) -> LabelResult {
    LabelResult {
        level: evidence.iter().map(|e| e.level).max(),
        evidence,
    }
}
