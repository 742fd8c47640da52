use serde::Serialize;

/// A lowercase word or punctuation token with byte offsets into its source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits on whitespace and emits every punctuation character as its own
/// token. Everything is lowercased.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut word_start: Option<usize> = None;

    let flush = |tokens: &mut Vec<Token>, start: Option<usize>, end: usize| {
        if let Some(start) = start {
            tokens.push(Token {
                text: text[start..end].to_lowercase(),
                start,
                end,
            });
        }
    };

    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            flush(&mut tokens, word_start.take(), i);
        } else if ch.is_alphanumeric() {
            if word_start.is_none() {
                word_start = Some(i);
            }
        } else {
            flush(&mut tokens, word_start.take(), i);
            let end = i + ch.len_utf8();
            tokens.push(Token {
                text: text[i..end].to_lowercase(),
                start: i,
                end,
            });
        }
    }
    flush(&mut tokens, word_start, text.len());
    tokens
}

/// Token texts only.
pub fn tokenize_words(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn splits_trailing_period() {
        assert_eq!(tokenize_words("No edema."), ["no", "edema", "."]);
    }

    #[test]
    fn hyphen_is_its_own_token() {
        assert_eq!(tokenize_words("Kerley-B lines"), ["kerley", "-", "b", "lines"]);
    }

    #[test]
    fn empty_text() {
        assert!(tokenize("").is_empty());
        assert!(tokenize(" \n\t ").is_empty());
    }

    #[test]
    fn offsets_point_into_source() {
        let text = "Mild  interstitial edema, improved.";
        for t in tokenize(text) {
            assert_eq!(text[t.start..t.end].to_lowercase(), t.text);
        }
    }

    proptest! {
        #[test]
        fn offsets_strictly_increase_and_cover_non_space(text in "[ A-Za-z0-9.,;:()-]{0,80}") {
            let toks = tokenize(&text);
            for w in toks.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
                prop_assert!(w[0].start < w[1].start);
            }
            let rebuilt: String = toks.iter().map(|t| t.text.as_str()).collect();
            let expected: String = text.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
            prop_assert_eq!(rebuilt, expected);
        }
    }
}
