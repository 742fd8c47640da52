use crate::error::{Error, Result};
use crate::rng::Stream;
use crate::textlab::Ruleset;

pub const BOS: &str = "[bos]";
pub const EOS: &str = "[eos]";
pub const UNK: &str = "[unk]";

/// Negation prefixes placed before Level-0 phrases.
pub const NEGATION_PREFIXES: &[&[&str]] = &[
    &["no"],
    &["without"],
    &["no", "evidence", "of"],
    &["negative", "for"],
    &["free", "of"],
    &["absence", "of"],
];

/// Filler words. None of them is a negation trigger, a scope terminator or
/// part of any keyword phrase.
pub const DISTRACTORS: &[&str] = &[
    "heart", "size", "is", "normal", "mediastinal", "contours", "are", "stable", "the", "lungs",
    "small", "left", "right", "pleural", "effusion", "atelectasis", "at", "bases", "tube",
    "catheter", "tip", "in", "standard", "position", "compared", "to", "prior", "study", "mild",
    "cardiomegaly", "unchanged", "bibasilar", "lower", "lobe", "chest", "radiograph", "portable",
    "upright", "view", "and", "with", "there", "aorta", "tortuous", "calcified", "sternotomy",
    "wires", "intact", "osseous", "structures",
];

pub const MIN_DISTRACTORS: usize = 5;
pub const MAX_DISTRACTORS: usize = 20;

/// A generated report: word tokens wrapped in BOS/EOS, with the span of the
/// planted finding (negation prefix included) in token positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedReport {
    pub words: Vec<String>,
    pub keyword_span: (usize, usize),
}

impl GeneratedReport {
    /// Plain text without the BOS/EOS markers.
    pub fn text(&self) -> String {
        report_text(&self.words)
    }
}

pub fn report_text(words: &[String]) -> String {
    words
        .iter()
        .filter(|w| *w != BOS && *w != EOS)
        .cloned()
        .collect::<Vec<_>>()
        .join(" ")
}

/// One keyword phrase of `level`, negated when the rule needs it, placed at
/// a random point among 5 to 20 filler words.
pub fn gen_report(level: u8, rng: &mut Stream, ruleset: &Ruleset, distractors: &[&str]) -> Result<GeneratedReport> {
    let rules: Vec<_> = ruleset.at_level(level).collect();
    if rules.is_empty() {
        return Err(Error::Config(format!("ruleset has no phrase for level {level}")));
    }
    if distractors.is_empty() {
        return Err(Error::Config("empty distractor vocabulary".into()));
    }
    let rule = rules[rng.below(rules.len())];

    let mut finding: Vec<String> = Vec::new();
    if rule.requires_negation {
        let prefix = NEGATION_PREFIXES[rng.below(NEGATION_PREFIXES.len())];
        finding.extend(prefix.iter().map(|w| w.to_string()));
    }
    finding.extend(rule.phrase.iter().cloned());

    let n_fill = rng.range_inclusive(MIN_DISTRACTORS, MAX_DISTRACTORS);
    let filler: Vec<String> = (0..n_fill)
        .map(|_| distractors[rng.below(distractors.len())].to_string())
        .collect();
    let at = rng.range_inclusive(0, n_fill);

    let mut words = Vec::with_capacity(n_fill + finding.len() + 2);
    words.push(BOS.to_string());
    words.extend_from_slice(&filler[..at]);
    let start = words.len();
    words.extend(finding);
    let end = words.len();
    words.extend_from_slice(&filler[at..]);
    words.push(EOS.to_string());
    Ok(GeneratedReport {
        words,
        keyword_span: (start, end),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textlab::{label_text, negation::TRIGGERS, negation::TERMINATORS};

    #[test]
    fn labeler_recovers_the_level() {
        let rules = Ruleset::default_rules();
        let mut s = Stream::new(77);
        for level in 0..4 {
            for _ in 0..50 {
                let rep = gen_report(level, &mut s, &rules, DISTRACTORS).unwrap();
                let got = label_text(&rep.text(), &rules).unwrap();
                assert_eq!(got.level, Some(level), "{}", rep.text());
            }
        }
    }

    #[test]
    fn level_zero_contains_a_trigger() {
        let rules = Ruleset::default_rules();
        let mut s = Stream::new(3);
        for _ in 0..20 {
            let rep = gen_report(0, &mut s, &rules, DISTRACTORS).unwrap();
            assert!(rep.words.iter().any(|w| TRIGGERS.iter().any(|t| t[0] == w)));
        }
    }

    #[test]
    fn deterministic_and_well_formed() {
        let rules = Ruleset::default_rules();
        let a = gen_report(2, &mut Stream::new(5), &rules, DISTRACTORS).unwrap();
        let b = gen_report(2, &mut Stream::new(5), &rules, DISTRACTORS).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.words.first().unwrap(), BOS);
        assert_eq!(a.words.last().unwrap(), EOS);
        let n_fill = a.words.len() - 2 - (a.keyword_span.1 - a.keyword_span.0);
        assert!((MIN_DISTRACTORS..=MAX_DISTRACTORS).contains(&n_fill));
    }

    #[test]
    fn missing_level_is_a_config_error() {
        let rules = Ruleset::from_json(r#"{"rules":[{"phrase":"kerley","level":2,"requires_negation":false}]}"#).unwrap();
        assert!(matches!(
            gen_report(1, &mut Stream::new(0), &rules, DISTRACTORS),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn distractors_are_inert() {
        let rules = Ruleset::default_rules();
        for d in DISTRACTORS {
            assert!(!TERMINATORS.contains(d));
            assert!(!TRIGGERS.iter().any(|t| t.contains(d)));
            assert!(!rules.rules().iter().any(|r| r.phrase.iter().any(|p| p == d)));
        }
    }
}
