//! JSON-lines persistence for a [`VectorIndex`].
//!
//! The first line is a header `{format, version, dim, granularity}`. Each
//! paper follows as its `put` records and a closing `commit` record; a paper
//! without a `commit` (a write cut short) is ignored on load. New papers are
//! appended. Replacing or removing a paper rewrites the whole file through a
//! temporary file and a rename.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use expando_core::index::{Granularity, IndexEntry, VectorIndex};
use serde::{Deserialize, Serialize};

pub const INDEX_FORMAT: &str = "expando-index";
pub const INDEX_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexHeader {
    pub format: String,
    pub version: u32,
    pub dim: usize,
    pub granularity: Granularity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum Record {
    Put { entry: IndexEntry },
    Commit { paper_id: String },
}

#[derive(Debug)]
pub enum IndexFileError {
    Io(PathBuf, std::io::Error),
    Header(String),
    Record { line: usize, message: String },
}

impl std::fmt::Display for IndexFileError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IndexFileError::Io(p, e) => write!(f, "{}: {e}", p.display()),
            IndexFileError::Header(m) => write!(f, "bad index header: {m}"),
            IndexFileError::Record { line, message } => write!(f, "bad index record on line {line}: {message}"),
        }
    }
}

impl std::error::Error for IndexFileError {}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> IndexFileError + '_ {
    move |e| IndexFileError::Io(path.to_path_buf(), e)
}

fn header_for(index: &VectorIndex) -> IndexHeader {
    IndexHeader {
        format: INDEX_FORMAT.into(),
        version: INDEX_VERSION,
        dim: index.dim(),
        granularity: index.granularity(),
    }
}

fn write_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")
}

fn write_paper<W: Write>(w: &mut W, index: &VectorIndex, paper_id: &str) -> std::io::Result<()> {
    for entry in index.paper_entries(paper_id) {
        write_line(w, &Record::Put { entry })?;
    }
    write_line(w, &Record::Commit { paper_id: paper_id.to_string() })
}

/// Writes the whole index, replacing `path` atomically.
pub fn save(path: &Path, index: &VectorIndex) -> Result<(), IndexFileError> {
    let tmp = path.with_extension("jsonl.tmp");
    {
        let file = File::create(&tmp).map_err(io_err(&tmp))?;
        let mut w = BufWriter::new(file);
        write_line(&mut w, &header_for(index)).map_err(io_err(&tmp))?;
        for paper in index.papers() {
            write_paper(&mut w, index, paper).map_err(io_err(&tmp))?;
        }
        let file = w.into_inner().map_err(|e| IndexFileError::Io(tmp.clone(), e.into_error()))?;
        file.sync_all().map_err(io_err(&tmp))?;
    }
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

/// Persists the state of `index` after `paper_id` was committed: appends when
/// the file exists and the paper is new to it, otherwise rewrites.
pub fn persist_commit(
    path: &Path,
    index: &VectorIndex,
    paper_id: &str,
    paper_was_present: bool,
) -> Result<(), IndexFileError> {
    if paper_was_present || !path.exists() {
        return save(path, index);
    }
    let file = OpenOptions::new().append(true).open(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    write_paper(&mut w, index, paper_id).map_err(io_err(path))?;
    let file = w.into_inner().map_err(|e| IndexFileError::Io(path.to_path_buf(), e.into_error()))?;
    file.sync_all().map_err(io_err(path))
}

/// Loads an index, failing on a header that does not match the expected
/// version, dimension or granularity.
pub fn load(path: &Path, dim: usize, granularity: Granularity) -> Result<VectorIndex, IndexFileError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| IndexFileError::Header("empty file".into()))?
        .map_err(io_err(path))?;
    let header: IndexHeader =
        serde_json::from_str(&first).map_err(|e| IndexFileError::Header(e.to_string()))?;
    if header.format != INDEX_FORMAT {
        return Err(IndexFileError::Header(format!("unknown format '{}'", header.format)));
    }
    if header.version != INDEX_VERSION {
        return Err(IndexFileError::Header(format!(
            "version {} is not supported (expected {INDEX_VERSION})",
            header.version
        )));
    }
    if header.dim != dim || header.granularity != granularity {
        return Err(IndexFileError::Header(format!(
            "file holds {} vectors of dim {}, expected {} of dim {dim}",
            header.granularity.as_str(),
            header.dim,
            granularity.as_str()
        )));
    }

    let mut index = VectorIndex::new(dim, granularity);
    let mut staged: BTreeMap<String, Vec<IndexEntry>> = BTreeMap::new();
    let all: Vec<String> = lines.collect::<Result<_, _>>().map_err(io_err(path))?;
    for (i, line) in all.iter().enumerate() {
        let line_no = i + 2;
        let record: Record = match serde_json::from_str(line) {
            Ok(r) => r,
            // A torn final line from an interrupted append.
            Err(_) if i + 1 == all.len() => {
                log::warn!("{}: ignoring truncated last line", path.display());
                break;
            }
            Err(e) => return Err(IndexFileError::Record { line: line_no, message: e.to_string() }),
        };
        match record {
            Record::Put { entry } => staged.entry(entry.key.paper_id.clone()).or_default().push(entry),
            Record::Commit { paper_id } => {
                let entries = staged.remove(&paper_id).unwrap_or_default();
                index
                    .replace_paper(&paper_id, entries)
                    .map_err(|e| IndexFileError::Record { line: line_no, message: e.to_string() })?;
            }
        }
    }
    for paper in staged.keys() {
        log::warn!("{}: dropping uncommitted records of {paper}", path.display());
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use expando_core::index::IndexKey;
    use expando_core::EmbeddingVector;

    fn entry(paper: &str, ordinal: usize, v: Vec<f64>) -> IndexEntry {
        IndexEntry {
            key: IndexKey { paper_id: paper.into(), granularity: Granularity::Chunk, ordinal },
            embedding: EmbeddingVector::normalized(v).unwrap(),
            payload_text: format!("{paper}/{ordinal}"),
        }
    }

    fn sample() -> VectorIndex {
        let mut index = VectorIndex::new(3, Granularity::Chunk);
        index
            .upsert(vec![
                entry("a", 0, vec![0.1, 0.2, 0.3]),
                entry("a", 1, vec![1.0 / 3.0, -0.7, 1e-9]),
                entry("b", 0, vec![std::f64::consts::PI, 2.0, -1.0]),
            ])
            .unwrap();
        index
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chunks.jsonl");
        let index = sample();
        save(&path, &index).unwrap();
        let loaded = load(&path, 3, Granularity::Chunk).unwrap();
        assert_eq!(loaded, index);
        let q = EmbeddingVector::normalized(vec![0.3, 0.1, -0.2]).unwrap();
        let before = index.top_k(&q, 12, "a").unwrap();
        let after = loaded.top_k(&q, 12, "a").unwrap();
        for (x, y) in before.hits.iter().zip(&after.hits) {
            assert_eq!(x.key, y.key);
            assert_eq!(x.score.to_bits(), y.score.to_bits());
        }
    }

    #[test]
    fn append_then_replace() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chunks.jsonl");
        let mut index = VectorIndex::new(3, Granularity::Chunk);
        index.replace_paper("a", vec![entry("a", 0, vec![1.0, 0.0, 0.0])]).unwrap();
        persist_commit(&path, &index, "a", false).unwrap();
        index.replace_paper("b", vec![]).unwrap();
        persist_commit(&path, &index, "b", false).unwrap();
        assert_eq!(load(&path, 3, Granularity::Chunk).unwrap(), index);

        index.replace_paper("a", vec![entry("a", 0, vec![0.0, 1.0, 0.0])]).unwrap();
        persist_commit(&path, &index, "a", true).unwrap();
        let loaded = load(&path, 3, Granularity::Chunk).unwrap();
        assert_eq!(loaded, index);
        assert!(loaded.contains_paper("b"));
        let lines = std::fs::read_to_string(&path).unwrap().lines().count();
        assert_eq!(lines, 1 + 2 + 1);
    }

    #[test]
    fn uncommitted_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chunks.jsonl");
        let index = sample();
        save(&path, &index).unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        write_line(&mut f, &Record::Put { entry: entry("c", 0, vec![1.0, 1.0, 1.0]) }).unwrap();
        f.write_all(b"{\"op\":\"put\",\"entry\":{\"ke").unwrap();
        let loaded = load(&path, 3, Granularity::Chunk).unwrap();
        assert_eq!(loaded, index);
    }

    #[test]
    fn mismatched_header_fails_loudly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chunks.jsonl");
        save(&path, &sample()).unwrap();
        assert!(matches!(load(&path, 4, Granularity::Chunk), Err(IndexFileError::Header(_))));
        assert!(matches!(load(&path, 3, Granularity::Paragraph), Err(IndexFileError::Header(_))));
        let text = std::fs::read_to_string(&path).unwrap().replacen("\"version\":1", "\"version\":9", 1);
        std::fs::write(&path, text).unwrap();
        let err = load(&path, 3, Granularity::Chunk).unwrap_err();
        assert!(err.to_string().contains("version 9"));
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chunks.jsonl");
        save(&path, &sample()).unwrap();
        let mut lines: Vec<String> = std::fs::read_to_string(&path).unwrap().lines().map(String::from).collect();
        lines[1] = "garbage".into();
        std::fs::write(&path, lines.join("\n") + "\n").unwrap();
        assert!(matches!(load(&path, 3, Granularity::Chunk), Err(IndexFileError::Record { line: 2, .. })));
    }
}
