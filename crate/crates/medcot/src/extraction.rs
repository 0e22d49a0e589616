//! Parsing completions into at most one predicted option label.
//!
//! A completion either names exactly one option or it is inconclusive;
//! inconclusive is a value, never an error, and downstream it counts in the
//! sample denominator without ever winning a vote.
//!
//! Matching runs over the NFC-normalized completion text:
//!
//! 1. the first standalone option letter scanning left to right ("B",
//!    "B)", "B.", "B,", "answer is B" all qualify; "B12" and "AB" do not);
//! 2. otherwise the earliest word-bounded, case- and whitespace-insensitive
//!    occurrence of exactly one option's full text — two different options
//!    mentioned means inconclusive;
//! 3. otherwise inconclusive.

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::dataset::{AnswerOption, Label};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractionMethod {
    LetterPattern,
    OptionText,
    None,
}

/// The parse result for one completion. `span` is a byte range into the
/// NFC-normalized completion text (identical to the raw text for ASCII).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedAnswer {
    pub label: Option<Label>,
    pub method: ExtractionMethod,
    pub span: Option<(usize, usize)>,
}

impl ExtractedAnswer {
    pub fn is_inconclusive(&self) -> bool {
        self.label.is_none()
    }

    fn inconclusive() -> ExtractedAnswer {
        ExtractedAnswer {
            label: None,
            method: ExtractionMethod::None,
            span: None,
        }
    }
}

/// NFC plus whitespace-run collapapse; case is preserved (letter matching is
/// case-sensitive, option-text matching lowercases internally).
pub fn normalize(text: &str) -> String {
    let nfc: String = text.nfc().collect();
    let mut out = String::with_capacity(nfc.len());
    let mut in_ws = false;
    for c in nfc.chars() {
        if c.is_whitespace() {
            if !in_ws && !out.is_empty() {
                out.push(' ');
            }
            in_ws = true;
        } else {
            out.push(c);
            in_ws = false;
        }
    }
    while out.ends_with(' ') {
        out.pop();
    }
    out
}

fn find_standalone_letter(text: &str, labels: &[Label]) -> Option<(Label, (usize, usize))> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    for (i, &(pos, c)) in chars.iter().enumerate() {
        let Some(label) = Label::from_char(c) else { continue };
        if !labels.contains(&label) {
            continue;
        }
        let before_ok = i == 0 || !chars[i - 1].1.is_alphanumeric();
        let after_ok = i + 1 == chars.len() || !chars[i + 1].1.is_alphanumeric();
        if before_ok && after_ok {
            return Some((label, (pos, pos + c.len_utf8())));
        }
    }
    None
}

fn chars_eq_ci(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

/// Finds `needle` (already whitespace-collapsed) in `haystack`, treating any
/// whitespace run as a single space, comparing case-insensitively, and
/// requiring word boundaries where the needle starts/ends alphanumeric.
fn find_flexible(haystack: &str, needle: &str) -> Option<(usize, usize)> {
    let h: Vec<(usize, char)> = haystack.char_indices().collect();
    let n: Vec<char> = needle.chars().collect();
    if n.is_empty() {
        return None;
    }
    for start in 0..h.len() {
        if n[0].is_alphanumeric() && start > 0 && h[start - 1].1.is_alphanumeric() {
            continue;
        }
        let mut i = start;
        let mut j = 0;
        let mut matched = true;
        while j < n.len() {
            if n[j] == ' ' {
                if i >= h.len() || !h[i].1.is_whitespace() {
                    matched = false;
                    break;
                }
                while i < h.len() && h[i].1.is_whitespace() {
                    i += 1;
                }
            } else {
                if i >= h.len() || !chars_eq_ci(h[i].1, n[j]) {
                    matched = false;
                    break;
                }
                i += 1;
            }
            j += 1;
        }
        if !matched {
            continue;
        }
        if n[n.len() - 1].is_alphanumeric() && i < h.len() && h[i].1.is_alphanumeric() {
            continue;
        }
        let end = if i < h.len() { h[i].0 } else { haystack.len() };
        return Some((h[start].0, end));
    }
    None
}

/// Parses one completion against the question's option list.
pub fn extract_answer(completion: &str, options: &[AnswerOption]) -> ExtractedAnswer {
    let text: String = completion.nfc().collect();
    let labels: Vec<Label> = options.iter().map(|o| o.label).collect();

    if let Some((label, span)) = find_standalone_letter(&text, &labels) {
        return ExtractedAnswer {
            label: Some(label),
            method: ExtractionMethod::LetterPattern,
            span: Some(span),
        };
    }

    let mut matches: Vec<(Label, (usize, usize))> = Vec::new();
    for opt in options {
        let needle = normalize(&opt.text).to_lowercase();
        if let Some(span) = find_flexible(&text, &needle) {
            matches.push((opt.label, span));
        }
    }
    if matches.len() == 1 {
        let (label, span) = matches[0];
        return ExtractedAnswer {
            label: Some(label),
            method: ExtractionMethod::OptionText,
            span: Some(span),
        };
    }
    ExtractedAnswer::inconclusive()
}

/// The membership indicator behind the answer likelihood: true iff the
/// completion's single extracted label is `x`. Indicators over all options
/// are mutually exclusive for a fixed completion.
pub fn indicator(x: Label, completion: &str, options: &[AnswerOption]) -> bool {
    extract_answer(completion, options).label == Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn options(texts: &[&str]) -> Vec<AnswerOption> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| AnswerOption {
                label: Label::from_index(i).unwrap(),
                text: t.to_string(),
            })
            .collect()
    }

    fn abcd() -> Vec<AnswerOption> {
        options(&["age", "cytogenetics", "fever and neutropenia", "initial presentation"])
    }

    #[test]
    fn letter_followed_by_comma_extracts() {
        let got = extract_answer(" B, cytogenetics.", &abcd());
        assert_eq!(got.label, Some(Label::B));
        assert_eq!(got.method, ExtractionMethod::LetterPattern);
        assert_eq!(got.span, Some((1, 2)));
    }

    #[test]
    fn none_of_the_above_is_inconclusive() {
        let got = extract_answer(" none of the above.", &abcd());
        assert!(got.is_inconclusive());
        assert_eq!(got.method, ExtractionMethod::None);
        assert_eq!(got.span, None);
    }

    #[test]
    fn two_option_texts_without_letters_are_inconclusive() {
        let got = extract_answer("it could be age or maybe cytogenetics", &abcd());
        assert!(got.is_inconclusive());
    }

    #[test]
    fn single_option_text_without_letter_matches() {
        let got = extract_answer("the key factor is cytogenetics here", &abcd());
        assert_eq!(got.label, Some(Label::B));
        assert_eq!(got.method, ExtractionMethod::OptionText);
        let (s, e) = got.span.unwrap();
        assert_eq!(&"the key factor is cytogenetics here"[s..e], "cytogenetics");
    }

    #[test]
    fn letter_patterns_from_common_layouts() {
        for text in ["B", "B)", "B.", "B,", "the answer is B", "(B) cytogenetics", "answer: B."] {
            assert_eq!(extract_answer(text, &abcd()).label, Some(Label::B), "text {text:?}");
        }
    }

    #[test]
    fn embedded_letters_do_not_match() {
        assert!(extract_answer("vitamin B12 deficiency", &abcd()).is_inconclusive());
        assert!(extract_answer("ABCD", &abcd()).is_inconclusive());
        // 'E' is outside a four-option label set.
        assert!(extract_answer("E) something else", &abcd()).is_inconclusive());
    }

    #[test]
    fn first_letter_wins_left_to_right() {
        let got = extract_answer("C is better than D here", &abcd());
        assert_eq!(got.label, Some(Label::C));
    }

    #[test]
    fn option_text_matching_is_case_and_whitespace_insensitive() {
        let got = extract_answer("clearly  Fever And\nNeutropenia explains it", &abcd());
        assert_eq!(got.label, Some(Label::C));
    }

    #[test]
    fn option_text_requires_word_boundaries() {
        let opts = options(&["yes", "no", "maybe"]);
        assert_eq!(extract_answer("the eyes have it", &opts).label, None);
        assert_eq!(extract_answer(" yes.", &opts).label, Some(Label::A));
        assert_eq!(extract_answer("it is unknown", &opts).label, None);
    }

    #[test]
    fn indicators_are_mutually_exclusive() {
        let opts = abcd();
        for text in [" B, cytogenetics.", "age matters", "none of the above", "A or B"] {
            let hits: usize = opts
                .iter()
                .filter(|o| indicator(o.label, text, &opts))
                .count();
            assert!(hits <= 1, "text {text:?} produced {hits} indicators");
        }
        assert!(indicator(Label::B, " B, cytogenetics.", &opts));
        assert!(!indicator(Label::A, " B, cytogenetics.", &opts));
    }

    #[test]
    fn extraction_is_normalization_idempotent() {
        let texts = [
            " B,   cytogenetics.",
            "answer \u{00e9}t\u{00e9} is C",
            "fev\u{0065}\u{0301}r and neutropenia", // decomposed accent normalizes away from "fever"
            "  the answer is\nD  ",
        ];
        for raw in texts {
            let normalized = normalize(raw);
            let a = extract_answer(raw, &abcd());
            let b = extract_answer(&normalized, &abcd());
            assert_eq!(a.label, b.label, "raw {raw:?}");
            assert_eq!(a.method, b.method, "raw {raw:?}");
        }
    }

    #[test]
    fn permuting_letter_mentions_permutes_the_extraction() {
        use crate::dataset::LabelPermutation;
        let opts = abcd();
        // A synthetic completion mentioning only a letter; rewriting the
        // letter under a permutation must permute the extracted label.
        for perm_seed in 0..10u64 {
            let perm = LabelPermutation::random(4, perm_seed);
            for label in [Label::A, Label::B, Label::C, Label::D] {
                let text = format!("the answer is {label}.");
                let rewritten = format!("the answer is {}.", perm.apply(label));
                let base = extract_answer(&text, &opts).label.unwrap();
                let moved = extract_answer(&rewritten, &opts).label.unwrap();
                assert_eq!(moved, perm.apply(base));
            }
        }
    }
}
