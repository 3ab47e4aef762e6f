//! Exact top-k cosine index, scoped per paper.
//!
//! Vectors are unit length on insert, so scoring is a dot product over every
//! entry of the requested paper. Results are ordered by descending score with
//! ties broken by ascending ordinal.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use serde::{Deserialize, Serialize};

use crate::vector::EmbeddingVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    Chunk,
    Paragraph,
}

impl Granularity {
    pub fn as_str(self) -> &'static str {
        match self {
            Granularity::Chunk => "chunk",
            Granularity::Paragraph => "paragraph",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IndexKey {
    pub paper_id: String,
    pub granularity: Granularity,
    pub ordinal: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub key: IndexKey,
    pub embedding: EmbeddingVector,
    pub payload_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub key: IndexKey,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub hits: Vec<Hit>,
    pub query_dim: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndexError {
    DimensionMismatch { expected: usize, found: usize },
    GranularityMismatch { expected: Granularity, found: Granularity },
    UnknownPaper(String),
    ZeroK,
}

impl core::fmt::Display for IndexError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            IndexError::DimensionMismatch { expected, found } => {
                write!(f, "dimension mismatch: index has {expected}, got {found}")
            }
            IndexError::GranularityMismatch { expected, found } => write!(
                f,
                "granularity mismatch: index holds {}, got {}",
                expected.as_str(),
                found.as_str()
            ),
            IndexError::UnknownPaper(id) => write!(f, "unknown paper '{id}'"),
            IndexError::ZeroK => f.write_str("k must be positive"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Stored {
    embedding: EmbeddingVector,
    payload_text: String,
}

/// In-memory exact index for one granularity and one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dim: usize,
    granularity: Granularity,
    entries: BTreeMap<(String, usize), Stored>,
    papers: BTreeSet<String>,
}

/// Descending score, then ascending ordinal.
pub fn rank_order(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

impl VectorIndex {
    pub fn new(dim: usize, granularity: Granularity) -> Self {
        assert!(dim > 0, "index dimension must be positive");
        VectorIndex { dim, granularity, entries: BTreeMap::new(), papers: BTreeSet::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn granularity(&self) -> Granularity {
        self.granularity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_paper(&self, paper_id: &str) -> bool {
        self.papers.contains(paper_id)
    }

    pub fn papers(&self) -> impl Iterator<Item = &str> {
        self.papers.iter().map(String::as_str)
    }

    /// Number of entries stored for one paper.
    pub fn paper_len(&self, paper_id: &str) -> usize {
        self.paper_range(paper_id).count()
    }

    fn paper_range<'a>(
        &'a self,
        paper_id: &'a str,
    ) -> impl Iterator<Item = (&'a (String, usize), &'a Stored)> + 'a {
        self.entries
            .range((paper_id.to_string(), 0)..)
            .take_while(move |((p, _), _)| p == paper_id)
    }

    pub fn get(&self, key: &IndexKey) -> Option<IndexEntry> {
        if key.granularity != self.granularity {
            return None;
        }
        self.entries.get(&(key.paper_id.clone(), key.ordinal)).map(|s| IndexEntry {
            key: key.clone(),
            embedding: s.embedding.clone(),
            payload_text: s.payload_text.clone(),
        })
    }

    /// Entries of one paper in ordinal order.
    pub fn paper_entries(&self, paper_id: &str) -> Vec<IndexEntry> {
        self.paper_range(paper_id)
            .map(|((p, ordinal), s)| IndexEntry {
                key: IndexKey { paper_id: p.clone(), granularity: self.granularity, ordinal: *ordinal },
                embedding: s.embedding.clone(),
                payload_text: s.payload_text.clone(),
            })
            .collect()
    }

    /// All entries in key order.
    pub fn entries(&self) -> impl Iterator<Item = IndexEntry> + '_ {
        self.entries.iter().map(|((p, ordinal), s)| IndexEntry {
            key: IndexKey { paper_id: p.clone(), granularity: self.granularity, ordinal: *ordinal },
            embedding: s.embedding.clone(),
            payload_text: s.payload_text.clone(),
        })
    }

    fn check(&self, entries: &[IndexEntry]) -> Result<(), IndexError> {
        for e in entries {
            if e.embedding.dim() != self.dim {
                return Err(IndexError::DimensionMismatch { expected: self.dim, found: e.embedding.dim() });
            }
            if e.key.granularity != self.granularity {
                return Err(IndexError::GranularityMismatch {
                    expected: self.granularity,
                    found: e.key.granularity,
                });
            }
        }
        Ok(())
    }

    /// Inserts or replaces entries. The whole batch is checked before any
    /// entry is written, so a failing batch leaves the index untouched.
    pub fn upsert(&mut self, entries: Vec<IndexEntry>) -> Result<(), IndexError> {
        self.check(&entries)?;
        for e in entries {
            self.papers.insert(e.key.paper_id.clone());
            self.entries.insert(
                (e.key.paper_id, e.key.ordinal),
                Stored { embedding: e.embedding, payload_text: e.payload_text },
            );
        }
        Ok(())
    }

    /// Replaces everything stored for `paper_id` with `entries` and registers
    /// the paper even when `entries` is empty.
    pub fn replace_paper(&mut self, paper_id: &str, entries: Vec<IndexEntry>) -> Result<(), IndexError> {
        self.check(&entries)?;
        if let Some(e) = entries.iter().find(|e| e.key.paper_id != paper_id) {
            return Err(IndexError::UnknownPaper(e.key.paper_id.clone()));
        }
        self.remove_paper(paper_id);
        self.papers.insert(paper_id.to_string());
        self.upsert(entries)
    }

    /// Removes a paper and its entries. Returns the number of entries removed.
    pub fn remove_paper(&mut self, paper_id: &str) -> usize {
        let keys: Vec<_> = self.paper_range(paper_id).map(|(k, _)| k.clone()).collect();
        for k in &keys {
            self.entries.remove(k);
        }
        self.papers.remove(paper_id);
        keys.len()
    }

    /// The `k` highest-scoring entries of one paper.
    pub fn top_k(
        &self,
        query: &EmbeddingVector,
        k: usize,
        paper_id: &str,
    ) -> Result<RetrievalResult, IndexError> {
        if k == 0 {
            return Err(IndexError::ZeroK);
        }
        if query.dim() != self.dim {
            return Err(IndexError::DimensionMismatch { expected: self.dim, found: query.dim() });
        }
        if !self.papers.contains(paper_id) {
            return Err(IndexError::UnknownPaper(paper_id.to_string()));
        }

        let q = query.values();
        let mut scored: Vec<(f64, usize)> = self
            .paper_range(paper_id)
            .map(|((_, ordinal), s)| {
                let score = s.embedding.values().iter().zip(q).map(|(a, b)| a * b).sum::<f64>();
                (score, *ordinal)
            })
            .collect();
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, |a, b| rank_order(*a, *b));
            scored.truncate(k);
        }
        scored.sort_unstable_by(|a, b| rank_order(*a, *b));

        Ok(RetrievalResult {
            hits: scored
                .into_iter()
                .map(|(score, ordinal)| Hit {
                    key: IndexKey { paper_id: paper_id.to_string(), granularity: self.granularity, ordinal },
                    score,
                })
                .collect(),
            query_dim: query.dim(),
        })
    }
}
