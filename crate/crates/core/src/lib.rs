#![cfg_attr(not(feature = "std"), no_std)]

//! Core engine for expandable abstracts.
//!
//! A paper's abstract becomes a tree of in-situ expansions: every span of the
//! abstract (or of an earlier expansion) can be clarified with a short answer
//! retrieved from the paper's full text and attributed to a source paragraph.
//!
//! This crate holds everything that is pure computation:
//!
//! - [`document`]: the canonical paper representation and its validation.
//! - [`segment`] and [`chunk`]: sentence segmentation and the 3-sentence
//!   sliding window used as the retrieval unit.
//! - [`vector`] and [`index`]: cosine similarity and an exact top-k index.
//! - [`embed`]: the embedding-provider trait plus a deterministic hashing
//!   encoder for offline use.
//! - [`ingest`]: turning parsed papers into embedded, committed indices.
//! - [`prompt`], [`llm`] and [`parse`]: prompt templates, the completion
//!   contract with retries, and response parsing.
//! - [`engine`] and [`tree`]: entity extraction, attributed answering and the
//!   per-session expansion tree.
//! - [`annotate`]: accuracy arithmetic for expansion annotation.
//!
//! IO, HTTP, persistence and the CLI live in the `expando` crate.

extern crate alloc;

pub mod annotate;
pub mod chunk;
pub mod document;
pub mod embed;
pub mod engine;
pub mod index;
pub mod ingest;
pub mod llm;
pub mod parse;
pub mod prompt;
pub mod segment;
pub mod tree;
pub mod vector;

pub use chunk::{build_chunks, Chunk, ChunkSpan};
pub use document::{PaperDocument, Paragraph, Sentence, ValidationReport};
pub use embed::{Embedder, EmbedError, HashingEmbedder};
pub use engine::{AnswerOutcome, EngineConfig, EngineError, ExpansionEngine};
pub use index::{Granularity, IndexEntry, IndexError, IndexKey, RetrievalResult, VectorIndex};
pub use ingest::{IngestError, IngestionConfig, ParserOutput, PreparedPaper};
pub use llm::{ChatProvider, GenerationParams, LlmResult, ProviderError};
pub use prompt::{PromptTemplate, RenderedPrompt, TemplateName};
pub use tree::{Anchor, ExpandableEntity, ExpansionNode, ExpansionTree, QuestionKind, TreeError};
pub use vector::{cosine, EmbeddingVector, VectorError};
