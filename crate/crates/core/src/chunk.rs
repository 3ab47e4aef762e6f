//! Sliding-window chunking over the body sentence stream.
//!
//! Windows slide over the continuous stream and ignore paragraph and section
//! boundaries; each chunk records the paragraphs it touches for display.

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::document::{join_sentences, PaperDocument};
use crate::vector::EmbeddingVector;

/// Window size and overlap, in sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingParams {
    pub chunk_size: usize,
    pub chunk_overlap: usize,
}

impl Default for ChunkingParams {
    fn default() -> Self {
        ChunkingParams { chunk_size: 3, chunk_overlap: 2 }
    }
}

impl ChunkingParams {
    pub fn is_valid(&self) -> bool {
        self.chunk_overlap < self.chunk_size
    }

    pub fn stride(&self) -> usize {
        self.chunk_size - self.chunk_overlap
    }
}

/// A chunk before embedding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSpan {
    pub chunk_index: usize,
    /// Half-open `[start, end)` over body sentence indices.
    pub start: usize,
    pub end: usize,
    pub text: String,
    /// Inclusive range of paragraphs the span touches.
    pub paragraphs: (usize, usize),
}

impl ChunkSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub paper_id: String,
    pub span: ChunkSpan,
    pub embedding: EmbeddingVector,
}

/// Window start/end pairs for a stream of `sentence_count` sentences.
///
/// With size 3 / overlap 2 this is `[i, i+3)` for `i in 0..=S-3`; a stream
/// shorter than one window yields one undersized span covering everything.
/// When the stride does not land exactly on the stream end, a final
/// undersized window picks up the tail.
pub fn window_spans(sentence_count: usize, params: ChunkingParams) -> Vec<(usize, usize)> {
    assert!(params.is_valid(), "chunk_overlap must be smaller than chunk_size");
    if sentence_count == 0 {
        return Vec::new();
    }
    if sentence_count <= params.chunk_size {
        return alloc::vec![(0, sentence_count)];
    }
    let stride = params.stride();
    let mut spans = Vec::new();
    let mut start = 0;
    while start + params.chunk_size <= sentence_count {
        spans.push((start, start + params.chunk_size));
        start += stride;
    }
    let covered = spans.last().map_or(0, |&(_, end)| end);
    if covered < sentence_count {
        spans.push((start, sentence_count));
    }
    spans
}

/// Splits a document's body sentences into overlapping chunks.
pub fn build_chunks(doc: &PaperDocument, params: ChunkingParams) -> Vec<ChunkSpan> {
    window_spans(doc.body_sentences.len(), params)
        .into_iter()
        .enumerate()
        .map(|(chunk_index, (start, end))| {
            let members = &doc.body_sentences[start..end];
            let first_para = members[0].paragraph_index.unwrap_or(0);
            let last_para = members[members.len() - 1].paragraph_index.unwrap_or(first_para);
            ChunkSpan {
                chunk_index,
                start,
                end,
                text: join_sentences(members.iter().map(|s| s.text.as_str())),
                paragraphs: (first_para, last_para),
            }
        })
        .collect()
}
