use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};

static WANTED: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"(?i)\b(?:impressions?|findings?|conclusions?|recommendations?(?:\s*\(s\))?)\s*:")
        .unwrap()
});

// Any all-caps header such as "INDICATION:" or "COMPARISON:" ends the
// preceding section body.
static ANY_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\b[A-Z][A-Z /()]*[A-Z)]\s*:").unwrap());

static FINAL_REPORT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bfinal\s+report\b\s*:?").unwrap());

#[derive(Debug, Clone, Copy)]
struct Header {
    start: usize,
    end: usize,
    wanted: bool,
}

/// Selects the report text used for labeling.
///
/// Bodies of IMPRESSION, FINDINGS, CONCLUSION and RECOMMENDATION sections are
/// concatenated in document order. Without any of them the text after a
/// FINAL REPORT header is used, and failing that the whole document.
pub fn extract_sections(raw_text: &str) -> Result<String> {
    if raw_text.trim().is_empty() {
        return Err(Error::EmptyDocument);
    }

    let mut headers: Vec<Header> = WANTED
        .find_iter(raw_text)
        .map(|m| Header {
            start: m.start(),
            end: m.end(),
            wanted: true,
        })
        .collect();
    for m in ANY_HEADER.find_iter(raw_text) {
        let overlaps = headers
            .iter()
            .any(|h| m.start() < h.end && h.start < m.end());
        if !overlaps {
            headers.push(Header {
                start: m.start(),
                end: m.end(),
                wanted: false,
            });
        }
    }
    headers.sort_by_key(|h| h.start);

    let bodies: Vec<&str> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| h.wanted)
        .map(|(i, h)| {
            let stop = headers.get(i + 1).map_or(raw_text.len(), |next| next.start);
            raw_text[h.end..stop].trim()
        })
        .filter(|body| !body.is_empty())
        .collect();

    if headers.iter().any(|h| h.wanted) {
        return Ok(bodies.join(" "));
    }
    if let Some(m) = FINAL_REPORT.find(raw_text) {
        return Ok(raw_text[m.end()..].trim().to_string());
    }
    Ok(raw_text.trim().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn listed_sections_in_document_order() {
        let got = extract_sections("FINDINGS: clear lungs. IMPRESSION: no edema.").unwrap();
        assert_eq!(got, "clear lungs. no edema.");
    }

    #[test]
    fn falls_back_to_final_report() {
        let got = extract_sections("FINAL REPORT\nstable appearance.").unwrap();
        assert_eq!(got, "stable appearance.");
    }

    #[test]
    fn falls_back_to_full_text() {
        let got = extract_sections("  mild cardiomegaly.  ").unwrap();
        assert_eq!(got, "mild cardiomegaly.");
    }

    #[test]
    fn empty_input_is_an_error() {
        assert!(matches!(extract_sections(""), Err(Error::EmptyDocument)));
        assert!(matches!(extract_sections(" \n "), Err(Error::EmptyDocument)));
    }

    #[test]
    fn other_headers_end_a_section() {
        let text = "FINAL REPORT\nINDICATION: dyspnea.\nFINDINGS: mild edema.\nCOMPARISON: none.\nimpression: stable.";
        assert_eq!(extract_sections(text).unwrap(), "mild edema. stable.");
    }

    #[test]
    fn headers_are_case_insensitive() {
        let text = "Impression:  Kerley B lines.";
        assert_eq!(extract_sections(text).unwrap(), "Kerley B lines.");
    }

    #[test]
    fn plural_recommendations() {
        let text = "FINDINGS: x.\nRECOMMENDATION(S): follow up.";
        assert_eq!(extract_sections(text).unwrap(), "x. follow up.");
    }
}
