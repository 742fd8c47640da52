use std::collections::HashMap;

use super::report::{BOS, DISTRACTORS, EOS, NEGATION_PREFIXES, UNK};
use crate::textlab::Ruleset;

/// Word ↔ id map. Ids 0, 1 and 2 are BOS, EOS and the unknown token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const BOS_ID: usize = 0;
    pub const EOS_ID: usize = 1;
    pub const UNK_ID: usize = 2;

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for t in [BOS, EOS, UNK].into_iter().map(String::from).chain(tokens) {
            vocab.push(t);
        }
        vocab
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    /// Every word the report generator can emit, in a fixed order.
    pub fn for_generator(ruleset: &Ruleset, distractors: &[&str]) -> Self {
        let mut words: Vec<String> = ruleset.rules().iter().flat_map(|r| r.phrase.iter().cloned()).collect();
        words.extend(NEGATION_PREFIXES.iter().flat_map(|p| p.iter().map(|w| w.to_string())));
        words.extend(distractors.iter().map(|w| w.to_string()));
        Self::from_tokens(words)
    }

    pub fn default_generator() -> Self {
        Self::for_generator(&Ruleset::default_rules(), DISTRACTORS)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(UNK, String::as_str)
    }

    pub fn encode(&self, words: &[String]) -> Vec<usize> {
        words.iter().map(|w| self.id(w)).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    /// Tokens in id order; the first three are the special markers.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specials_first_and_no_duplicates() {
        let v = Vocabulary::default_generator();
        assert_eq!(v.id(BOS), Vocabulary::BOS_ID);
        assert_eq!(v.id(EOS), Vocabulary::EOS_ID);
        assert_eq!(v.id("never-seen"), Vocabulary::UNK_ID);
        let mut sorted = v.tokens().to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), v.len());
        assert_eq!(Vocabulary::from_tokens(v.tokens()[3..].to_vec()), v);
    }
}
