use std::collections::BTreeSet;

use super::tokenize::Token;

/// Negation triggers, as token sequences.
pub const TRIGGERS: &[&[&str]] = &[
    &["no", "evidence", "of"],
    &["negative", "for"],
    &["absence", "of"],
    &["free", "of"],
    &["clear", "of"],
    &["without"],
    &["resolved"],
    &["no"],
];

/// Tokens that close an open negation scope.
pub const TERMINATORS: &[&str] = &[".", ",", ";", "but", "however", "although"];

pub const SCOPE_LEN: usize = 6;

fn trigger_at(words: &[&str], i: usize) -> Option<usize> {
    TRIGGERS
        .iter()
        .filter(|t| words[i..].starts_with(t))
        .map(|t| t.len())
        .max()
}

/// Indices of tokens that fall inside a negation scope.
pub fn detect_negation(tokens: &[Token]) -> BTreeSet<usize> {
    let words: Vec<&str> = tokens.iter().map(|t| t.text.as_str()).collect();
    detect_negation_words(&words)
}

pub fn detect_negation_words(words: &[&str]) -> BTreeSet<usize> {
    let mut negated = BTreeSet::new();
    let mut i = 0;
    while i < words.len() {
        let Some(len) = trigger_at(words, i) else {
            i += 1;
            continue;
        };
        let scope_start = i + len;
        for j in scope_start..(scope_start + SCOPE_LEN).min(words.len()) {
            if TERMINATORS.contains(&words[j]) {
                break;
            }
            negated.insert(j);
        }
        i = scope_start;
    }
    negated
}
