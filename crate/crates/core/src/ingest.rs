//! Turns parser output or canonical documents into embedded chunk and
//! paragraph records, then commits them to both indices in one step.
//!
//! Everything that can fail (validation, embedding, dimension checks) runs
//! in [`prepare`] before any index is touched; [`IndexSet::commit`] only
//! swaps the paper's entries in.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::chunk::{build_chunks, Chunk, ChunkingParams};
use crate::document::{validate_document, Metadata, PaperDocument, ParagraphInput, ValidationReport};
use crate::embed::{embed_checked, EmbedError, Embedder};
use crate::index::{Granularity, IndexEntry, IndexError, IndexKey, VectorIndex};
use crate::segment::segment_sentences;
use crate::vector::EmbeddingVector;

/// Structured output of an external PDF parser, already mapped out of the
/// parser's own schema.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParserOutput {
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub sections: Vec<ParsedSection>,
    pub source_uri: String,
    #[serde(default)]
    pub metadata: Metadata,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedSection {
    pub heading: Option<String>,
    pub paragraphs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestionConfig {
    pub chunk_size: usize,
    pub chunk_overlap: usize,
    pub embedding_model_id: String,
    pub embedding_dim: usize,
    pub batch_size: usize,
    /// Extra attempts per embedding batch after a transport failure.
    pub batch_retries: u32,
}

impl Default for IngestionConfig {
    fn default() -> Self {
        IngestionConfig {
            chunk_size: 3,
            chunk_overlap: 2,
            embedding_model_id: crate::embed::HashingEmbedder::MODEL_ID.to_string(),
            embedding_dim: 256,
            batch_size: 32,
            batch_retries: 2,
        }
    }
}

impl IngestionConfig {
    pub fn chunking(&self) -> ChunkingParams {
        ChunkingParams { chunk_size: self.chunk_size, chunk_overlap: self.chunk_overlap }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestError {
    InvalidParserOutput(String),
    InvalidDocument(ValidationReport),
    InvalidConfig(String),
    Embedding(EmbedError),
    Index(IndexError),
}

impl core::fmt::Display for IngestError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            IngestError::InvalidParserOutput(msg) => write!(f, "invalid parser output: {msg}"),
            IngestError::InvalidDocument(report) => {
                write!(f, "invalid document: {}", report.violations.join("; "))
            }
            IngestError::InvalidConfig(msg) => write!(f, "invalid ingestion config: {msg}"),
            IngestError::Embedding(e) => write!(f, "{e}"),
            IngestError::Index(e) => write!(f, "{e}"),
        }
    }
}

impl From<EmbedError> for IngestError {
    fn from(e: EmbedError) -> Self {
        IngestError::Embedding(e)
    }
}

impl From<IndexError> for IngestError {
    fn from(e: IndexError) -> Self {
        IngestError::Index(e)
    }
}

/// Stable paper id derived from the source locator, so re-ingesting the same
/// file maps onto the same records.
pub fn paper_id_for(source_uri: &str) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in source_uri.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("paper-{h:016x}")
}

/// Segments parser output into a [`PaperDocument`]. Blank paragraphs are
/// skipped; headings become paragraph labels.
pub fn document_from_parser_output(output: &ParserOutput) -> Result<PaperDocument, IngestError> {
    let abstract_sentences = segment_sentences(&output.abstract_text)
        .map_err(|_| IngestError::InvalidParserOutput("abstract is empty".into()))?;
    if output.title.trim().is_empty() {
        return Err(IngestError::InvalidParserOutput("title is empty".into()));
    }
    let mut paragraphs = Vec::new();
    for section in &output.sections {
        for raw in &section.paragraphs {
            if let Ok(sentences) = segment_sentences(raw) {
                paragraphs.push(ParagraphInput { section: section.heading.clone(), page: None, sentences });
            }
        }
    }
    let source_uri = if output.source_uri.is_empty() {
        format!("title:{}", output.title.trim())
    } else {
        output.source_uri.clone()
    };
    Ok(PaperDocument::from_parts(
        paper_id_for(&source_uri),
        output.title.trim(),
        abstract_sentences,
        paragraphs,
        source_uri,
        output.metadata.clone(),
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParagraphRecord {
    pub paper_id: String,
    pub paragraph_index: usize,
    pub text: String,
    pub embedding: EmbeddingVector,
}

/// A fully embedded paper waiting to be committed.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPaper {
    pub document: PaperDocument,
    pub chunks: Vec<Chunk>,
    pub paragraphs: Vec<ParagraphRecord>,
}

impl PreparedPaper {
    pub fn chunk_entries(&self) -> Vec<IndexEntry> {
        self.chunks
            .iter()
            .map(|c| IndexEntry {
                key: IndexKey {
                    paper_id: c.paper_id.clone(),
                    granularity: Granularity::Chunk,
                    ordinal: c.span.chunk_index,
                },
                embedding: c.embedding.clone(),
                payload_text: c.span.text.clone(),
            })
            .collect()
    }

    pub fn paragraph_entries(&self) -> Vec<IndexEntry> {
        self.paragraphs
            .iter()
            .map(|p| IndexEntry {
                key: IndexKey {
                    paper_id: p.paper_id.clone(),
                    granularity: Granularity::Paragraph,
                    ordinal: p.paragraph_index,
                },
                embedding: p.embedding.clone(),
                payload_text: p.text.clone(),
            })
            .collect()
    }
}

fn embed_batched(
    embedder: &dyn Embedder,
    texts: &[String],
    cfg: &IngestionConfig,
) -> Result<Vec<EmbeddingVector>, EmbedError> {
    let mut out = Vec::with_capacity(texts.len());
    for batch in texts.chunks(cfg.batch_size.max(1)) {
        let mut attempt = 0;
        loop {
            match embed_checked(embedder, batch) {
                Ok(vectors) => {
                    out.extend(vectors);
                    break;
                }
                Err(EmbedError::Provider(_) | EmbedError::Timeout) if attempt < cfg.batch_retries => {
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(out)
}

/// Validates, chunks and embeds a document. No index is touched.
pub fn prepare(
    document: PaperDocument,
    cfg: &IngestionConfig,
    embedder: &dyn Embedder,
) -> Result<PreparedPaper, IngestError> {
    if !cfg.chunking().is_valid() {
        return Err(IngestError::InvalidConfig(format!(
            "chunk_overlap {} must be smaller than chunk_size {}",
            cfg.chunk_overlap, cfg.chunk_size
        )));
    }
    if embedder.dim() != cfg.embedding_dim {
        return Err(IngestError::Embedding(EmbedError::DimensionMismatch {
            expected: cfg.embedding_dim,
            found: embedder.dim(),
        }));
    }
    if embedder.model_id() != cfg.embedding_model_id {
        return Err(IngestError::InvalidConfig(format!(
            "embedder model '{}' differs from configured '{}'",
            embedder.model_id(),
            cfg.embedding_model_id
        )));
    }
    let report = validate_document(&document);
    if !report.is_valid() {
        return Err(IngestError::InvalidDocument(report));
    }

    let spans = build_chunks(&document, cfg.chunking());
    let chunk_texts: Vec<String> = spans.iter().map(|s| s.text.clone()).collect();
    let chunk_vectors = embed_batched(embedder, &chunk_texts, cfg)?;
    let para_texts: Vec<String> = document.body_paragraphs.iter().map(|p| p.text.clone()).collect();
    let para_vectors = embed_batched(embedder, &para_texts, cfg)?;

    let paper_id = document.paper_id.clone();
    let chunks = spans
        .into_iter()
        .zip(chunk_vectors)
        .map(|(span, embedding)| Chunk { paper_id: paper_id.clone(), span, embedding })
        .collect();
    let paragraphs = document
        .body_paragraphs
        .iter()
        .zip(para_vectors)
        .map(|(p, embedding)| ParagraphRecord {
            paper_id: paper_id.clone(),
            paragraph_index: p.paragraph_index,
            text: p.text.clone(),
            embedding,
        })
        .collect();
    Ok(PreparedPaper { document, chunks, paragraphs })
}

/// The chunk index and the paragraph index of one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSet {
    pub chunks: VectorIndex,
    pub paragraphs: VectorIndex,
}

impl IndexSet {
    pub fn new(dim: usize) -> Self {
        IndexSet {
            chunks: VectorIndex::new(dim, Granularity::Chunk),
            paragraphs: VectorIndex::new(dim, Granularity::Paragraph),
        }
    }

    /// Replaces the paper's records in both indices. Both batches are checked
    /// first, so an error leaves both indices as they were.
    pub fn commit(&mut self, prepared: &PreparedPaper) -> Result<(), IngestError> {
        let paper_id = prepared.document.paper_id.as_str();
        let chunk_entries = prepared.chunk_entries();
        let para_entries = prepared.paragraph_entries();
        let mut chunks = self.chunks.clone();
        chunks.replace_paper(paper_id, chunk_entries)?;
        let mut paragraphs = self.paragraphs.clone();
        paragraphs.replace_paper(paper_id, para_entries)?;
        self.chunks = chunks;
        self.paragraphs = paragraphs;
        Ok(())
    }
}

/// `prepare` followed by `commit`; returns the paper id.
pub fn ingest(
    output: &ParserOutput,
    cfg: &IngestionConfig,
    embedder: &dyn Embedder,
    indices: &mut IndexSet,
) -> Result<(String, PreparedPaper), IngestError> {
    let document = document_from_parser_output(output)?;
    let prepared = prepare(document, cfg, embedder)?;
    indices.commit(&prepared)?;
    Ok((prepared.document.paper_id.clone(), prepared))
}
