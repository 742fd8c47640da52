use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize::tokenize_words;
use crate::error::{Error, Result};

const DEFAULT_RULES: &str = include_str!("../../assets/default_rules.json");

/// One keyword phrase and the severity level it indicates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordRule {
    pub phrase: Vec<String>,
    pub level: u8,
    /// Level-0 phrases only count when they appear negated.
    pub requires_negation: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct RuleRecord {
    phrase: String,
    level: u8,
    requires_negation: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct RuleFile {
    rules: Vec<RuleRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ruleset {
    rules: Vec<KeywordRule>,
}

impl KeywordRule {
    pub fn new(phrase: &str, level: u8, requires_negation: bool) -> Result<Self> {
        let tokens = tokenize_words(phrase);
        if tokens.is_empty() {
            return Err(Error::Config(format!("empty rule phrase {phrase:?}")));
        }
        if level > 3 {
            return Err(Error::Config(format!(
                "rule {phrase:?} has level {level}, expected 0..=3"
            )));
        }
        Ok(KeywordRule {
            phrase: tokens,
            level,
            requires_negation,
        })
    }

    pub fn phrase_text(&self) -> String {
        self.phrase.join(" ")
    }
}

impl Ruleset {
    pub fn new(rules: Vec<KeywordRule>) -> Result<Self> {
        if rules.is_empty() {
            return Err(Error::Config("ruleset has no rules".into()));
        }
        Ok(Ruleset { rules })
    }

    /// The bundled keyword table.
    pub fn default_rules() -> Self {
        Self::from_json(DEFAULT_RULES).expect("bundled ruleset is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: RuleFile = serde_json::from_str(text)?;
        let rules = file
            .rules
            .iter()
            .map(|r| KeywordRule::new(&r.phrase, r.level, r.requires_negation))
            .collect::<Result<Vec<_>>>()?;
        Self::new(rules)
    }

    pub fn to_json(&self) -> String {
        let file = RuleFile {
            rules: self
                .rules
                .iter()
                .map(|r| RuleRecord {
                    phrase: r.phrase_text(),
                    level: r.level,
                    requires_negation: r.requires_negation,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("ruleset serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_json(&text)
    }

    /// `"default"` selects the bundled table; anything else is a path.
    pub fn from_arg(arg: &str) -> Result<Self> {
        if arg == "default" {
            Ok(Self::default_rules())
        } else {
            Self::load(Path::new(arg))
        }
    }

    pub fn rules(&self) -> &[KeywordRule] {
        &self.rules
    }

    pub fn at_level(&self, level: u8) -> impl Iterator<Item = &KeywordRule> {
        self.rules.iter().filter(move |r| r.level == level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_shape() {
        let rules = Ruleset::default_rules();
        let per_level: Vec<usize> = (0..4).map(|l| rules.at_level(l).count()).collect();
        assert_eq!(per_level, [4, 6, 9, 9]);
        for r in rules.rules() {
            assert_eq!(r.requires_negation, r.level == 0);
        }
    }

    #[test]
    fn json_round_trip() {
        let rules = Ruleset::default_rules();
        assert_eq!(Ruleset::from_json(&rules.to_json()).unwrap(), rules);
    }

    #[test]
    fn rejects_bad_rules() {
        assert!(KeywordRule::new("  ", 1, false).is_err());
        assert!(KeywordRule::new("edema", 4, false).is_err());
        assert!(Ruleset::from_json(r#"{"rules": []}"#).is_err());
    }
}
