//! Canonical in-memory representation of a paper.
//!
//! A [`PaperDocument`] keeps the abstract apart from the body. Body sentences
//! form one gapless stream (`0..N`) that paragraphs partition into contiguous
//! spans; this stream is what chunking slides over. Paragraph text is always
//! the member sentences joined by [`SENTENCE_SEPARATOR`].

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

/// Separator used whenever sentences are joined back into text.
pub const SENTENCE_SEPARATOR: &str = " ";

/// Current version of [`CanonicalDocument`].
pub const CANONICAL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    /// Zero-based index. Body sentences index the body stream; abstract
    /// sentences carry their own 0-based sequence.
    pub sentence_index: usize,
    pub text: String,
    /// Owning paragraph, `None` for abstract sentences.
    pub paragraph_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub paragraph_index: usize,
    /// Inclusive `[first, last]` body sentence indices.
    pub sentence_span: (usize, usize),
    pub text: String,
    pub section_label: Option<String>,
    pub page_anchor: Option<u32>,
}

impl Paragraph {
    pub fn sentence_count(&self) -> usize {
        self.sentence_span.1 + 1 - self.sentence_span.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub authors: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub venue: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaperDocument {
    pub paper_id: String,
    pub title: String,
    pub abstract_sentences: Vec<Sentence>,
    pub body_sentences: Vec<Sentence>,
    pub body_paragraphs: Vec<Paragraph>,
    pub source_uri: String,
    pub metadata: Metadata,
}

/// One paragraph as handed to [`PaperDocument::from_parts`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParagraphInput {
    pub section: Option<String>,
    pub page: Option<u32>,
    pub sentences: Vec<String>,
}

impl PaperDocument {
    /// Builds a document and assigns all sentence and paragraph indices.
    /// Paragraphs without sentences are skipped. The result is not validated;
    /// call [`validate_document`] for that.
    pub fn from_parts(
        paper_id: impl Into<String>,
        title: impl Into<String>,
        abstract_sentences: Vec<String>,
        paragraphs: Vec<ParagraphInput>,
        source_uri: impl Into<String>,
        metadata: Metadata,
    ) -> Self {
        let abstract_sentences = abstract_sentences
            .into_iter()
            .enumerate()
            .map(|(i, text)| Sentence { sentence_index: i, text, paragraph_index: None })
            .collect();

        let mut body_sentences = Vec::new();
        let mut body_paragraphs = Vec::new();
        for para in paragraphs.into_iter().filter(|p| !p.sentences.is_empty()) {
            let paragraph_index = body_paragraphs.len();
            let first = body_sentences.len();
            let text = para.sentences.join(SENTENCE_SEPARATOR);
            for s in para.sentences {
                body_sentences.push(Sentence {
                    sentence_index: body_sentences.len(),
                    text: s,
                    paragraph_index: Some(paragraph_index),
                });
            }
            body_paragraphs.push(Paragraph {
                paragraph_index,
                sentence_span: (first, body_sentences.len() - 1),
                text,
                section_label: para.section,
                page_anchor: para.page,
            });
        }

        PaperDocument {
            paper_id: paper_id.into(),
            title: title.into(),
            abstract_sentences,
            body_sentences,
            body_paragraphs,
            source_uri: source_uri.into(),
            metadata,
        }
    }

    /// The abstract as displayed: its sentences joined by a single space.
    pub fn abstract_text(&self) -> String {
        join_sentences(self.abstract_sentences.iter().map(|s| s.text.as_str()))
    }

    pub fn paragraph(&self, index: usize) -> Option<&Paragraph> {
        self.body_paragraphs.get(index)
    }

    /// Sentences of one paragraph, in order.
    pub fn paragraph_sentences(&self, paragraph: &Paragraph) -> &[Sentence] {
        let (first, last) = paragraph.sentence_span;
        &self.body_sentences[first..=last]
    }

    pub fn to_canonical(&self) -> CanonicalDocument {
        CanonicalDocument {
            version: CANONICAL_VERSION,
            paper_id: self.paper_id.clone(),
            title: self.title.clone(),
            source_uri: self.source_uri.clone(),
            abstract_sentences: self.abstract_sentences.iter().map(|s| s.text.clone()).collect(),
            paragraphs: self
                .body_paragraphs
                .iter()
                .map(|p| CanonicalParagraph {
                    index: p.paragraph_index,
                    section: p.section_label.clone(),
                    page: p.page_anchor,
                    sentences: self
                        .paragraph_sentences(p)
                        .iter()
                        .map(|s| s.text.clone())
                        .collect(),
                })
                .collect(),
            metadata: self.metadata.clone(),
        }
    }
}

pub fn join_sentences<'a>(sentences: impl IntoIterator<Item = &'a str>) -> String {
    let mut out = String::new();
    for (i, s) in sentences.into_iter().enumerate() {
        if i > 0 {
            out.push_str(SENTENCE_SEPARATOR);
        }
        out.push_str(s);
    }
    out
}

/// Versioned serialized form of a [`PaperDocument`]. Field names are part of
/// the on-disk and wire contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalDocument {
    pub version: u32,
    #[serde(default)]
    pub paper_id: String,
    pub title: String,
    #[serde(default)]
    pub source_uri: String,
    #[serde(rename = "abstract")]
    pub abstract_sentences: Vec<String>,
    pub paragraphs: Vec<CanonicalParagraph>,
    #[serde(default)]
    pub metadata: Metadata,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalParagraph {
    pub index: usize,
    #[serde(default)]
    pub section: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub page: Option<u32>,
    pub sentences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CanonicalError {
    UnsupportedVersion(u32),
    /// Paragraph `index` fields must be `0..n` in order.
    ParagraphOrder { position: usize, found: usize },
}

impl core::fmt::Display for CanonicalError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CanonicalError::UnsupportedVersion(v) => {
                write!(f, "unsupported document version {v} (expected {CANONICAL_VERSION})")
            }
            CanonicalError::ParagraphOrder { position, found } => {
                write!(f, "paragraph at position {position} has index {found}")
            }
        }
    }
}

impl CanonicalDocument {
    pub fn into_document(self) -> Result<PaperDocument, CanonicalError> {
        if self.version != CANONICAL_VERSION {
            return Err(CanonicalError::UnsupportedVersion(self.version));
        }
        if let Some((position, p)) =
            self.paragraphs.iter().enumerate().find(|(i, p)| p.index != *i)
        {
            return Err(CanonicalError::ParagraphOrder { position, found: p.index });
        }
        let paragraphs = self
            .paragraphs
            .into_iter()
            .map(|p| ParagraphInput { section: p.section, page: p.page, sentences: p.sentences })
            .collect();
        Ok(PaperDocument::from_parts(
            self.paper_id,
            self.title,
            self.abstract_sentences,
            paragraphs,
            self.source_uri,
            self.metadata,
        ))
    }
}

/// Invariant violations found in a document. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.contains(needle))
    }

    fn push(&mut self, v: String) {
        self.violations.push(v);
    }
}

fn check_sentence_text(report: &mut ValidationReport, what: &str, s: &Sentence) {
    if s.text.is_empty() {
        report.push(format!("{what} sentence {} is empty", s.sentence_index));
    } else if s.text.trim() != s.text {
        report.push(format!(
            "{what} sentence {} has leading or trailing whitespace",
            s.sentence_index
        ));
    }
}

fn check_gapless(report: &mut ValidationReport, what: &str, indices: impl Iterator<Item = usize>) {
    for (expected, found) in indices.enumerate() {
        if found != expected {
            if found > expected {
                report.push(format!("{what} sentence indices: gap at index {expected}"));
            } else {
                report.push(format!(
                    "{what} sentence indices: index {found} out of order at position {expected}"
                ));
            }
            return;
        }
    }
}

/// Checks every document invariant and reports violations as data.
pub fn validate_document(doc: &PaperDocument) -> ValidationReport {
    let mut report = ValidationReport::default();

    if doc.abstract_sentences.is_empty() {
        report.push("abstract_sentences empty".to_string());
    }
    for s in &doc.abstract_sentences {
        check_sentence_text(&mut report, "abstract", s);
        if s.paragraph_index.is_some() {
            report.push(format!("abstract sentence {} is assigned to a paragraph", s.sentence_index));
        }
    }
    check_gapless(&mut report, "abstract", doc.abstract_sentences.iter().map(|s| s.sentence_index));

    for s in &doc.body_sentences {
        check_sentence_text(&mut report, "body", s);
    }
    check_gapless(&mut report, "body", doc.body_sentences.iter().map(|s| s.sentence_index));

    let mut next_sentence = 0usize;
    for (pos, p) in doc.body_paragraphs.iter().enumerate() {
        if p.paragraph_index != pos {
            report.push(format!("paragraph at position {pos} has index {}", p.paragraph_index));
        }
        let (first, last) = p.sentence_span;
        if first > last {
            report.push(format!("paragraph {pos} has an empty sentence span"));
            continue;
        }
        if first != next_sentence {
            report.push(format!(
                "paragraph {pos} span starts at {first}, expected {next_sentence}"
            ));
        }
        next_sentence = last + 1;
        let Some(members) = doc.body_sentences.get(first..=last) else {
            report.push(format!("paragraph {pos} span [{first}, {last}] is out of range"));
            continue;
        };
        if let Some(s) = members.iter().find(|s| s.paragraph_index != Some(pos)) {
            report.push(format!(
                "sentence {} inside paragraph {pos} names paragraph {:?}",
                s.sentence_index, s.paragraph_index
            ));
        }
        if join_sentences(members.iter().map(|s| s.text.as_str())) != p.text {
            report.push(format!("paragraph {pos} text does not match its sentences"));
        }
    }
    if next_sentence != doc.body_sentences.len() {
        report.push(format!(
            "paragraphs cover {next_sentence} of {} body sentences",
            doc.body_sentences.len()
        ));
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn two_paragraph_doc() -> PaperDocument {
        PaperDocument::from_parts(
            "p1",
            "A title",
            vec!["We study things.".into(), "It works.".into()],
            vec![
                ParagraphInput {
                    section: Some("Introduction".into()),
                    page: Some(1),
                    sentences: vec!["First.".into(), "Second.".into()],
                },
                ParagraphInput { section: None, page: None, sentences: vec!["Third.".into()] },
            ],
            "file://a.pdf",
            Metadata::default(),
        )
    }

    #[test]
    fn well_formed_document_is_valid() {
        let doc = two_paragraph_doc();
        assert_eq!(validate_document(&doc), ValidationReport::default());
        assert_eq!(doc.body_paragraphs[1].sentence_span, (2, 2));
        assert_eq!(doc.body_paragraphs[0].text, "First. Second.");
        assert_eq!(doc.abstract_text(), "We study things. It works.");
    }

    #[test]
    fn empty_abstract_is_reported() {
        let mut doc = two_paragraph_doc();
        doc.abstract_sentences.clear();
        assert!(validate_document(&doc).contains("abstract_sentences empty"));
    }

    #[test]
    fn sentence_index_gap_is_reported() {
        let mut doc = two_paragraph_doc();
        doc.body_sentences[2].sentence_index = 3;
        assert!(validate_document(&doc).contains("gap at index 2"));
    }

    #[test]
    fn mismatched_paragraph_text_is_reported() {
        let mut doc = two_paragraph_doc();
        doc.body_paragraphs[0].text = "First.  Second.".into();
        assert!(validate_document(&doc).contains("paragraph 0 text"));
    }

    #[test]
    fn whitespace_padded_sentence_is_reported() {
        let mut doc = two_paragraph_doc();
        doc.abstract_sentences[0].text = " We study things.".into();
        assert!(validate_document(&doc).contains("leading or trailing whitespace"));
    }

    #[test]
    fn canonical_round_trip() {
        let doc = two_paragraph_doc();
        let back = doc.to_canonical().into_document().unwrap();
        assert_eq!(back, doc);
    }

    #[test]
    fn canonical_rejects_other_versions() {
        let mut c = two_paragraph_doc().to_canonical();
        c.version = 9;
        assert_eq!(c.into_document(), Err(CanonicalError::UnsupportedVersion(9)));
    }
}
