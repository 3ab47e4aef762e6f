//! Parsing raw model output into answers and entity candidates.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::segment::segment_sentences;

/// Answers are cut to this many sentences.
pub const MAX_ANSWER_SENTENCES: usize = 3;

/// Default cap on anchor-phrase length, in words.
pub const DEFAULT_ANCHOR_WORD_CAP: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParsedAnswer {
    Answer(String),
    NoAnswer,
}

const QUOTES: &[char] = &['"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'];

fn strip_answer_label(text: &str) -> &str {
    let t = text.trim_start();
    match t.get(..7) {
        Some(head) if head.eq_ignore_ascii_case("answer:") => t[7..].trim_start(),
        _ => t,
    }
}

/// `NoAnswer` when the trimmed text, ignoring case, leading quotes and
/// trailing punctuation, starts with "no answer" (or is empty). Otherwise
/// the trimmed text, cut to its first three sentences.
pub fn parse_answer(raw: &str) -> ParsedAnswer {
    let text = strip_answer_label(raw).trim();
    let normalized = text
        .trim_start_matches(QUOTES)
        .trim_end_matches(|c: char| c.is_ascii_punctuation() || QUOTES.contains(&c) || c.is_whitespace())
        .to_lowercase();
    if normalized.is_empty() || normalized.starts_with("no answer") {
        return ParsedAnswer::NoAnswer;
    }
    match segment_sentences(text) {
        Ok(sentences) if sentences.len() > MAX_ANSWER_SENTENCES => {
            ParsedAnswer::Answer(sentences[..MAX_ANSWER_SENTENCES].join(" "))
        }
        _ => ParsedAnswer::Answer(text.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityCandidate {
    pub question: String,
    pub anchor_phrase: String,
}

/// Strips `1.`, `1)`, `-`, `*` and bullet markers.
fn strip_list_marker(line: &str) -> &str {
    let t = line.trim_start();
    if let Some(rest) = t.strip_prefix(['-', '*', '\u{2022}']) {
        return rest.trim_start();
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let rest = &t[digits..];
        if let Some(r) = rest.strip_prefix(['.', ')', ':']) {
            return r.trim_start();
        }
    }
    t
}

fn clean_phrase(raw: &str) -> String {
    let mut p = raw.trim();
    for prefix in ["phrase:", "anchor:", "span:"] {
        if p.len() >= prefix.len() && p[..prefix.len()].eq_ignore_ascii_case(prefix) {
            p = p[prefix.len()..].trim();
        }
    }
    p.trim_matches(QUOTES).trim().to_string()
}

/// Parses `question | phrase` lines. Lines without both parts, and phrases
/// longer than `word_cap` words, are dropped.
pub fn parse_entity_list(raw: &str, word_cap: usize) -> Vec<EntityCandidate> {
    raw.lines()
        .filter_map(|line| {
            let line = strip_list_marker(line);
            let (question, phrase) = line.rsplit_once('|')?;
            let question = question.trim();
            let anchor_phrase = clean_phrase(phrase);
            let words = anchor_phrase.split_whitespace().count();
            if question.is_empty() || words == 0 || words > word_cap {
                return None;
            }
            Some(EntityCandidate { question: question.to_string(), anchor_phrase })
        })
        .collect()
}

/// First line of a question-generation reply, without a `Question:` label
/// or wrapping quotes.
pub fn parse_question(raw: &str) -> Option<String> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty())?;
    let line = match line.get(..9) {
        Some(head) if head.eq_ignore_ascii_case("question:") => line[9..].trim(),
        _ => line,
    };
    let q = line.trim_matches(QUOTES).trim();
    (!q.is_empty()).then(|| q.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn no_answer_variants() {
        for raw in ["No answer.", "no answer", "  NO ANSWER!  ", "\"No answer.\"", "Answer: No answer.", "No answer", ""] {
            assert_eq!(parse_answer(raw), ParsedAnswer::NoAnswer, "{raw:?}");
        }
    }

    #[test]
    fn four_sentences_are_cut_to_three() {
        let raw = "One is here. Two is here. Three is here. Four is here.";
        assert_eq!(
            parse_answer(raw),
            ParsedAnswer::Answer("One is here. Two is here. Three is here.".into())
        );
    }

    #[test]
    fn short_answers_are_kept_verbatim_after_trim() {
        let raw = "\n  It uses a 2-hop neighborhood.  Papers are summarized. \n";
        assert_eq!(
            parse_answer(raw),
            ParsedAnswer::Answer("It uses a 2-hop neighborhood.  Papers are summarized.".into())
        );
    }

    #[test]
    fn answer_mentioning_no_answer_later_is_an_answer() {
        assert!(matches!(parse_answer("There is no answer key in the dataset."), ParsedAnswer::Answer(_)));
    }

    #[test]
    fn two_well_formed_lines() {
        let raw = "Questions:\n1. What is the ACTA task? | ACTA\n2. What are the main characteristics of the proposed framework? | \"a new framework\"";
        assert_eq!(
            parse_entity_list(raw, DEFAULT_ANCHOR_WORD_CAP),
            vec![
                EntityCandidate { question: "What is the ACTA task?".into(), anchor_phrase: "ACTA".into() },
                EntityCandidate {
                    question: "What are the main characteristics of the proposed framework?".into(),
                    anchor_phrase: "a new framework".into()
                },
            ]
        );
    }

    #[test]
    fn malformed_lines_are_dropped() {
        let raw = "- Why now?\n- What is X? | X\n- Empty phrase? |  \n- Too long? | one two three four five six seven";
        let parsed = parse_entity_list(raw, DEFAULT_ANCHOR_WORD_CAP);
        assert_eq!(parsed.len(), 1);
        assert_eq!(parsed[0].anchor_phrase, "X");
    }

    #[test]
    fn empty_input_gives_empty_list() {
        assert!(parse_entity_list("", DEFAULT_ANCHOR_WORD_CAP).is_empty());
    }

    #[test]
    fn question_reply_cleanup() {
        assert_eq!(parse_question("\nQuestion: \"What is ACTA?\"\nextra").as_deref(), Some("What is ACTA?"));
        assert_eq!(parse_question("   \n"), None);
    }
}
