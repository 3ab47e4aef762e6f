//! Rule-based sentence segmentation for scholarly prose.
//!
//! A boundary is placed after a word ending in `.`, `!` or `?` (optionally
//! followed by closing quotes or brackets) when all of these hold:
//!
//! - no parenthesis or bracket opened in the current sentence is still open;
//! - the word is not a known abbreviation (`Fig.`, `Eq.`, `cf.`, `e.g.`,
//!   `et al.`, ...) or an initialism (`J.`, `U.S.`);
//! - the next word does not start with a lowercase letter.
//!
//! Whitespace runs inside a sentence collapse to a single space.

use alloc::string::String;
use alloc::vec::Vec;
use core::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentError {
    EmptyInput,
}

impl core::fmt::Display for SegmentError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SegmentError::EmptyInput => f.write_str("cannot segment empty or whitespace-only text"),
        }
    }
}

/// Lowercased abbreviations that never end a sentence.
const ABBREVIATIONS: &[&str] = &[
    "al.", "alg.", "app.", "appx.", "approx.", "c.f.", "ca.", "cf.", "ch.", "chap.", "co.",
    "col.", "cols.", "corp.", "def.", "dept.", "dr.", "e.g.", "eg.", "eq.", "eqn.", "eqs.",
    "esp.", "est.", "fig.", "figs.", "i.e.", "ie.", "inc.", "jr.", "lem.", "ltd.",
    "mr.", "mrs.", "ms.", "prof.", "prop.", "ref.", "refs.",
    "resp.", "sec.", "secs.", "sect.", "sr.", "st.", "tab.", "tbl.", "thm.", "viz.", "vol.",
    "vs.", "w.r.t.", "wrt.",
];

/// Abbreviations that only hold before a number, so that "No." alone still
/// ends a sentence.
const NUMERIC_ABBREVIATIONS: &[&str] = &["no.", "nos.", "p.", "pp."];

const OPENERS: &[char] = &['(', '[', '{', '"', '\'', '\u{201c}', '\u{2018}'];
const CLOSERS: &[char] = &[')', ']', '}', '"', '\'', '\u{201d}', '\u{2019}'];

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '\u{2026}')
}

/// The word without surrounding quotes/brackets, lowercased.
fn core_word(word: &str) -> String {
    word.trim_start_matches(OPENERS).trim_end_matches(CLOSERS).to_lowercase()
}

fn is_abbreviation(word: &str, next: &str) -> bool {
    let core = core_word(word);
    ABBREVIATIONS.contains(&core.as_str())
        || (NUMERIC_ABBREVIATIONS.contains(&core.as_str())
            && next.trim_start_matches(OPENERS).starts_with(|c: char| c.is_ascii_digit()))
}

/// `J.`, `U.S.`, `A.B.C.`: single letters each followed by a period.
fn is_initialism(word: &str) -> bool {
    let core = word.trim_start_matches(OPENERS).trim_end_matches(CLOSERS);
    let mut chars = core.chars().peekable();
    let mut letters = 0;
    while let Some(c) = chars.next() {
        if !c.is_alphabetic() || chars.next() != Some('.') {
            return false;
        }
        letters += 1;
    }
    letters > 0 && core.chars().next().is_some_and(char::is_uppercase)
}

fn ends_sentence(word: &str, next: &str) -> bool {
    let trimmed = word.trim_end_matches(CLOSERS);
    match trimmed.chars().last() {
        Some(c) if is_terminator(c) => {}
        _ => return false,
    }
    if trimmed.ends_with('.') && (is_abbreviation(trimmed, next) || is_initialism(trimmed)) {
        // "...". ends a sentence even when the preceding word is an abbreviation
        return trimmed.ends_with("..");
    }
    true
}

fn starts_lowercase(word: &str) -> bool {
    word.trim_start_matches(OPENERS).chars().next().is_some_and(char::is_lowercase)
}

fn bracket_delta(word: &str) -> i32 {
    word.chars()
        .map(|c| match c {
            '(' | '[' => 1,
            ')' | ']' => -1,
            _ => 0,
        })
        .sum()
}

/// Byte ranges of the sentences in `raw`, each running from its first word's
/// start to its last word's end.
pub fn sentence_spans(raw: &str) -> Vec<Range<usize>> {
    let words: Vec<(usize, &str)> = raw
        .split_whitespace()
        .map(|w| (w.as_ptr() as usize - raw.as_ptr() as usize, w))
        .collect();

    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut depth = 0i32;
    for (i, &(offset, word)) in words.iter().enumerate() {
        let begin = *start.get_or_insert(offset);
        depth = (depth + bracket_delta(word)).max(0);
        let boundary = match words.get(i + 1) {
            None => true,
            Some(&(_, next)) => depth == 0 && ends_sentence(word, next) && !starts_lowercase(next),
        };
        if boundary {
            spans.push(begin..offset + word.len());
            start = None;
            depth = 0;
        }
    }
    spans
}

/// Splits a raw paragraph into trimmed, non-empty sentences.
pub fn segment_sentences(raw: &str) -> Result<Vec<String>, SegmentError> {
    let spans = sentence_spans(raw);
    if spans.is_empty() {
        return Err(SegmentError::EmptyInput);
    }
    Ok(spans
        .into_iter()
        .map(|r| raw[r].split_whitespace().collect::<Vec<_>>().join(" "))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn two_plain_sentences() {
        assert_eq!(
            segment_sentences("We ran tests. They passed.").unwrap(),
            vec!["We ran tests.", "They passed."]
        );
    }

    #[test]
    fn no_terminator_is_one_sentence() {
        assert_eq!(segment_sentences("One sentence only").unwrap(), vec!["One sentence only"]);
    }

    #[test]
    fn figure_and_cf_guards() {
        assert_eq!(
            segment_sentences("Results (cf. Fig. 2) improved. See §4.").unwrap(),
            vec!["Results (cf. Fig. 2) improved.", "See §4."]
        );
    }

    #[test]
    fn whitespace_only_is_an_error() {
        assert_eq!(segment_sentences(" \n\t "), Err(SegmentError::EmptyInput));
    }

    #[test]
    fn et_al_and_initials_do_not_split() {
        assert_eq!(
            segment_sentences("As shown by Smith et al. The result holds. J. Doe agreed.").unwrap(),
            vec!["As shown by Smith et al. The result holds.", "J. Doe agreed."]
        );
    }

    #[test]
    fn numeric_abbreviations_need_a_number() {
        assert_eq!(segment_sentences("See No. 5 in the list. Done.").unwrap().len(), 2);
        assert_eq!(segment_sentences("No. It failed.").unwrap(), vec!["No.", "It failed."]);
    }

    #[test]
    fn lowercase_continuation_does_not_split() {
        assert_eq!(
            segment_sentences("We use 3 vs. 4 layers, e.g. the deep one. Done!").unwrap(),
            vec!["We use 3 vs. 4 layers, e.g. the deep one.", "Done!"]
        );
    }

    #[test]
    fn closing_quote_after_terminator() {
        assert_eq!(
            segment_sentences("They said \"stop.\" Then we left?").unwrap(),
            vec!["They said \"stop.\"", "Then we left?"]
        );
    }

    #[test]
    fn spans_point_into_the_input() {
        let raw = "  Alpha beta.\n Gamma (x. y) delta!  ";
        let spans = sentence_spans(raw);
        assert_eq!(&raw[spans[0].clone()], "Alpha beta.");
        assert_eq!(&raw[spans[1].clone()], "Gamma (x. y) delta!");
    }

    #[test]
    fn whitespace_runs_collapse() {
        assert_eq!(
            segment_sentences("  A  b\nc.   D e.  ").unwrap(),
            vec!["A b c.", "D e."]
        );
    }
}
