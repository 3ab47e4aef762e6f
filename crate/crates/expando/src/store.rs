//! On-disk layout under the data directory:
//!
//! ```text
//! papers/<paper_id>.json   paper record (status, canonical document, entities)
//! index/chunks.jsonl       chunk index
//! index/paragraphs.jsonl   paragraph index
//! trees/<tree_id>.json     expansion trees
//! expansions.jsonl         log of created expansions
//! audit.jsonl              every model exchange
//! ```

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use expando_core::annotate::LoggedExpansion;
use expando_core::document::CanonicalDocument;
use expando_core::engine::{AnswerCache, AnswerOutcome, AuditSink, CacheKey, TtlMap};
use expando_core::index::Granularity;
use expando_core::ingest::IndexSet;
use expando_core::prompt::TemplateName;
use expando_core::tree::{ExpandableEntity, ExpansionTree};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::index_file::{self, IndexFileError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaperStatus {
    Processing,
    Ready,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: String,
    pub status: PaperStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub document: CanonicalDocument,
    #[serde(default)]
    pub entities: Vec<ExpandableEntity>,
    /// Set when abstract entity extraction failed; the paper stays usable.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities_error: Option<String>,
    #[serde(default)]
    pub chunk_count: usize,
    #[serde(default)]
    pub paragraph_count: usize,
}

#[derive(Debug)]
pub enum StoreError {
    Io(PathBuf, std::io::Error),
    Json(PathBuf, serde_json::Error),
    Index(IndexFileError),
}

impl std::fmt::Display for StoreError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoreError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            StoreError::Json(p, e) => write!(f, "{}: {e}", p.display()),
            StoreError::Index(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for StoreError {}

impl From<IndexFileError> for StoreError {
    fn from(e: IndexFileError) -> Self {
        StoreError::Index(e)
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
    let io = |e| StoreError::Io(path.to_path_buf(), e);
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp).map_err(io)?;
        f.write_all(bytes).map_err(io)?;
        f.sync_all().map_err(io)?;
    }
    std::fs::rename(&tmp, path).map_err(io)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::Io(path.to_path_buf(), e))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Json(path.to_path_buf(), e))
}

fn append_line<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let io = |e| StoreError::Io(path.to_path_buf(), e);
    let mut line = serde_json::to_vec(value).map_err(|e| StoreError::Json(path.to_path_buf(), e))?;
    line.push(b'\n');
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    f.write_all(&line).map_err(io)
}

/// Ids used as file names: letters, digits, `-` and `_`, at most 96 chars.
pub fn is_safe_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 96 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for sub in ["papers", "index", "trees"] {
            let dir = root.join(sub);
            std::fs::create_dir_all(&dir).map_err(|e| StoreError::Io(dir, e))?;
        }
        Ok(Store { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn index_path(&self, granularity: Granularity) -> PathBuf {
        let name = match granularity {
            Granularity::Chunk => "chunks.jsonl",
            Granularity::Paragraph => "paragraphs.jsonl",
        };
        self.root.join("index").join(name)
    }

    pub fn expansion_log_path(&self) -> PathBuf {
        self.root.join("expansions.jsonl")
    }

    pub fn audit_path(&self) -> PathBuf {
        self.root.join("audit.jsonl")
    }

    fn paper_path(&self, paper_id: &str) -> PathBuf {
        self.root.join("papers").join(format!("{paper_id}.json"))
    }

    fn tree_path(&self, tree_id: &str) -> PathBuf {
        self.root.join("trees").join(format!("{tree_id}.json"))
    }

    /// Both indices; empty ones when nothing has been written yet.
    pub fn load_indices(&self, dim: usize) -> Result<IndexSet, StoreError> {
        let mut set = IndexSet::new(dim);
        let chunks = self.index_path(Granularity::Chunk);
        if chunks.exists() {
            set.chunks = index_file::load(&chunks, dim, Granularity::Chunk)?;
        }
        let paragraphs = self.index_path(Granularity::Paragraph);
        if paragraphs.exists() {
            set.paragraphs = index_file::load(&paragraphs, dim, Granularity::Paragraph)?;
        }
        Ok(set)
    }

    pub fn persist_commit(&self, indices: &IndexSet, paper_id: &str, was_present: bool) -> Result<(), StoreError> {
        index_file::persist_commit(&self.index_path(Granularity::Chunk), &indices.chunks, paper_id, was_present)?;
        index_file::persist_commit(
            &self.index_path(Granularity::Paragraph),
            &indices.paragraphs,
            paper_id,
            was_present,
        )?;
        Ok(())
    }

    pub fn save_paper(&self, record: &PaperRecord) -> Result<(), StoreError> {
        let path = self.paper_path(&record.paper_id);
        let bytes = serde_json::to_vec_pretty(record).map_err(|e| StoreError::Json(path.clone(), e))?;
        write_atomic(&path, &bytes)
    }

    pub fn load_paper(&self, paper_id: &str) -> Result<Option<PaperRecord>, StoreError> {
        if !is_safe_id(paper_id) {
            return Ok(None);
        }
        let path = self.paper_path(paper_id);
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    pub fn load_papers(&self) -> Result<Vec<PaperRecord>, StoreError> {
        let dir = self.root.join("papers");
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&dir).map_err(|e| StoreError::Io(dir.clone(), e))? {
            let path = entry.map_err(|e| StoreError::Io(dir.clone(), e))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                out.push(read_json(&path)?);
            }
        }
        out.sort_by(|a: &PaperRecord, b| a.paper_id.cmp(&b.paper_id));
        Ok(out)
    }

    pub fn save_tree(&self, tree: &ExpansionTree) -> Result<(), StoreError> {
        let path = self.tree_path(&tree.tree_id);
        let bytes = serde_json::to_vec_pretty(tree).map_err(|e| StoreError::Json(path.clone(), e))?;
        write_atomic(&path, &bytes)
    }

    pub fn load_tree(&self, tree_id: &str) -> Result<Option<ExpansionTree>, StoreError> {
        if !is_safe_id(tree_id) {
            return Ok(None);
        }
        let path = self.tree_path(tree_id);
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }

    pub fn log_expansion(&self, entry: &LoggedExpansion) -> Result<(), StoreError> {
        append_line(&self.expansion_log_path(), entry)
    }
}

/// Reads a JSON-lines expansion log.
pub fn read_expansion_log(path: &Path) -> Result<Vec<LoggedExpansion>, StoreError> {
    let text = std::fs::read_to_string(path).map_err(|e| StoreError::Io(path.to_path_buf(), e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| StoreError::Json(path.to_path_buf(), e)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub timestamp: String,
    pub template_name: TemplateName,
    pub bindings_digest: String,
    pub raw_response: String,
}

/// SHA-256 over the bindings as a sorted JSON object, lowercase hex.
pub fn bindings_digest(bindings: &BTreeMap<String, String>) -> String {
    let canonical = serde_json::to_vec(bindings).expect("string maps serialize");
    Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
}

/// Appends one [`AuditRecord`] per model exchange.
pub struct JsonlAudit {
    path: PathBuf,
    lock: Mutex<()>,
    clock: fn() -> String,
}

fn rfc3339_now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl JsonlAudit {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        JsonlAudit { path: path.into(), lock: Mutex::new(()), clock: rfc3339_now }
    }

    /// Fixed timestamps, for byte-stable output.
    pub fn with_clock(path: impl Into<PathBuf>, clock: fn() -> String) -> Self {
        JsonlAudit { path: path.into(), lock: Mutex::new(()), clock }
    }
}

impl AuditSink for JsonlAudit {
    fn record(&self, template: TemplateName, bindings: &BTreeMap<String, String>, raw_response: &str) {
        let record = AuditRecord {
            timestamp: (self.clock)(),
            template_name: template,
            bindings_digest: bindings_digest(bindings),
            raw_response: raw_response.to_string(),
        };
        let _guard = self.lock.lock().unwrap_or_else(|e| e.into_inner());
        if let Err(e) = append_line(&self.path, &record) {
            log::error!("audit log write failed: {e}");
        }
    }
}

/// Answer cache shared across threads.
#[derive(Debug, Default)]
pub struct SharedCache(Mutex<TtlMap>);

impl SharedCache {
    pub fn new(ttl_ms: Option<u64>) -> Self {
        SharedCache(Mutex::new(TtlMap::new(ttl_ms)))
    }

    pub fn remove_paper(&self, paper_id: &str) {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).remove_paper(paper_id)
    }
}

impl AnswerCache for SharedCache {
    fn get(&self, key: &CacheKey, now_ms: u64) -> Option<AnswerOutcome> {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).get(key, now_ms)
    }

    fn put(&self, key: CacheKey, outcome: AnswerOutcome, now_ms: u64) {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).put(key, outcome, now_ms)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use expando_core::prompt::bindings;

    #[test]
    fn digest_is_order_independent_and_hex() {
        let a = bindings([("Question", "q"), ("Context", "c")]);
        let b = bindings([("Context", "c"), ("Question", "q")]);
        let d = bindings_digest(&a);
        assert_eq!(d, bindings_digest(&b));
        assert_eq!(d.len(), 64);
        assert_ne!(d, bindings_digest(&bindings([("Question", "q2"), ("Context", "c")])));
    }

    #[test]
    fn audit_lines_have_the_documented_fields() {
        let dir = tempfile::tempdir().unwrap();
        let audit = JsonlAudit::with_clock(dir.path().join("a.jsonl"), || "2026-01-01T00:00:00.000Z".into());
        audit.record(TemplateName::QuestionAnswering, &bindings([("Question", "q")]), " raw \n");
        let text = std::fs::read_to_string(dir.path().join("a.jsonl")).unwrap();
        let v: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(v["template_name"], "question_answering");
        assert_eq!(v["raw_response"], " raw \n");
        assert_eq!(v["timestamp"], "2026-01-01T00:00:00.000Z");
        assert_eq!(v.as_object().unwrap().len(), 4);
    }

    #[test]
    fn unsafe_ids_are_not_paths() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::open(dir.path()).unwrap();
        assert!(!is_safe_id("../etc"));
        assert!(store.load_tree("../x").unwrap().is_none());
        assert!(is_safe_id("session-1_a"));
    }
}
