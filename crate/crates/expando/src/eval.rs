//! Evaluation harness: retrieval exactness against a linear scan, and
//! stratified annotation of logged expansions.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use expando_core::annotate::{stratify, AccuracyReport, AnnotationRecord, LoggedExpansion, Verdict};
use expando_core::index::{rank_order, VectorIndex};
use expando_core::vector::{cosine, EmbeddingVector};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Question kinds sampled for annotation.
pub const ANNOTATION_KINDS: [&str; 4] = ["define", "expand", "why", "suggested"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EvalError {
    Invalid(String),
    Index(String),
}

impl std::fmt::Display for EvalError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalError::Invalid(m) => f.write_str(m),
            EvalError::Index(m) => write!(f, "index error: {m}"),
        }
    }
}

impl std::error::Error for EvalError {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub paper_id: String,
    pub entries: usize,
    pub trials: usize,
    pub k: usize,
    /// Trials whose ranked ids differ from the linear scan.
    pub mismatched_rankings: usize,
    pub max_score_divergence: f64,
    pub passed: bool,
}

pub const SCORE_TOLERANCE: f64 = 1e-9;

/// Runs `trials` random queries against `paper_id` and compares the index's
/// top-k with a full scan over the stored vectors.
pub fn retrieval_check(
    index: &VectorIndex,
    paper_id: &str,
    trials: usize,
    k: usize,
    query_dim: Option<usize>,
    rng: &mut StdRng,
) -> Result<RetrievalReport, EvalError> {
    if let Some(d) = query_dim {
        if d != index.dim() {
            return Err(EvalError::Invalid(format!("query dimension {d} does not match index dimension {}", index.dim())));
        }
    }
    if k == 0 {
        return Err(EvalError::Invalid("k must be positive".into()));
    }
    let entries = index.paper_entries(paper_id);
    let mut report = RetrievalReport {
        paper_id: paper_id.to_string(),
        entries: entries.len(),
        trials,
        k,
        mismatched_rankings: 0,
        max_score_divergence: 0.0,
        passed: true,
    };
    if entries.is_empty() {
        return Ok(report);
    }
    for _ in 0..trials {
        let raw: Vec<f64> = (0..index.dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let Ok(query) = EmbeddingVector::normalized(raw) else { continue };
        let got = index.top_k(&query, k, paper_id).map_err(|e| EvalError::Index(e.to_string()))?;

        let mut scan = entries
            .iter()
            .map(|e| Ok((cosine(e.embedding.values(), query.values())?, e.key.ordinal)))
            .collect::<Result<Vec<(f64, usize)>, expando_core::VectorError>>()
            .map_err(|e| EvalError::Index(e.to_string()))?;
        scan.sort_by(|a, b| rank_order(*a, *b));
        scan.truncate(k);

        let same = got.hits.len() == scan.len()
            && got.hits.iter().zip(&scan).all(|(h, (_, ord))| h.key.ordinal == *ord);
        if !same {
            report.mismatched_rankings += 1;
        }
        for (h, (score, _)) in got.hits.iter().zip(&scan) {
            report.max_score_divergence = report.max_score_divergence.max((h.score - score).abs());
        }
    }
    report.passed = report.mismatched_rankings == 0 && report.max_score_divergence <= SCORE_TOLERANCE;
    Ok(report)
}

/// Draws `per_kind` entries from each annotated kind present in the log,
/// then tops the sample up to `total` from the remaining entries.
pub fn sample_for_annotation<'a>(
    entries: &'a [LoggedExpansion],
    total: usize,
    per_kind: usize,
    rng: &mut StdRng,
) -> Result<Vec<&'a LoggedExpansion>, EvalError> {
    if entries.is_empty() {
        return Err(EvalError::Invalid("the expansion log is empty".into()));
    }
    let strata = stratify(entries, &ANNOTATION_KINDS);
    let present = strata.iter().filter(|s| !s.is_empty()).count();
    if per_kind * present > total {
        return Err(EvalError::Invalid(format!(
            "{per_kind} per kind over {present} kinds exceeds the sample size {total}"
        )));
    }
    let mut picked: Vec<&LoggedExpansion> = Vec::with_capacity(total);
    for (kind, stratum) in ANNOTATION_KINDS.iter().zip(&strata) {
        if stratum.is_empty() {
            continue;
        }
        if stratum.len() < per_kind {
            return Err(EvalError::Invalid(format!(
                "only {} '{kind}' expansions logged, {per_kind} requested",
                stratum.len()
            )));
        }
        picked.extend(stratum.choose_multiple(rng, per_kind).copied());
    }
    let taken: HashSet<&str> = picked.iter().map(|e| e.node_id.as_str()).collect();
    let rest: Vec<&LoggedExpansion> = entries.iter().filter(|e| !taken.contains(e.node_id.as_str())).collect();
    let need = total - picked.len();
    if rest.len() < need {
        return Err(EvalError::Invalid(format!(
            "{} expansions logged, {total} requested",
            picked.len() + rest.len()
        )));
    }
    picked.extend(rest.choose_multiple(rng, need).copied());
    Ok(picked)
}

/// One line of a verdicts file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictLine {
    pub node_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
}

pub fn parse_verdicts(text: &str) -> Result<BTreeMap<String, VerdictLine>, EvalError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let v: VerdictLine = serde_json::from_str(line)
            .map_err(|e| EvalError::Invalid(format!("verdicts line {}: {e}", i + 1)))?;
        out.insert(v.node_id.clone(), v);
    }
    Ok(out)
}

/// Applies file verdicts to the sample; every sampled node needs one.
pub fn annotate_from_file(
    sample: &[&LoggedExpansion],
    verdicts: &BTreeMap<String, VerdictLine>,
) -> Result<Vec<AnnotationRecord>, EvalError> {
    sample
        .iter()
        .map(|e| {
            let v = verdicts
                .get(&e.node_id)
                .ok_or_else(|| EvalError::Invalid(format!("no verdict for {}", e.node_id)))?;
            Ok(AnnotationRecord { expansion: (*e).clone(), verdict: v.verdict, note: v.note.clone() })
        })
        .collect()
}

/// Prompts for each verdict on `output` and reads answers from `input`.
pub fn annotate_interactive(
    sample: &[&LoggedExpansion],
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> Result<Vec<AnnotationRecord>, EvalError> {
    let io = |e: std::io::Error| EvalError::Invalid(format!("terminal: {e}"));
    let mut records = Vec::with_capacity(sample.len());
    for (i, e) in sample.iter().enumerate() {
        writeln!(output, "\n[{}/{}] {} ({})", i + 1, sample.len(), e.node_id, e.kind).map_err(io)?;
        writeln!(output, "Q: {}\nA: {}", e.question, e.answer).map_err(io)?;
        let verdict = loop {
            write!(output, "verdict [a]ccurate/[i]naccurate_detail/[m]issing_content/[o]ther: ").map_err(io)?;
            output.flush().map_err(io)?;
            let mut line = String::new();
            if input.read_line(&mut line).map_err(io)? == 0 {
                return Err(EvalError::Invalid("input ended before all verdicts were given".into()));
            }
            if let Some(v) = Verdict::parse(&line) {
                break v;
            }
        };
        records.push(AnnotationRecord { expansion: (*e).clone(), verdict, note: String::new() });
    }
    Ok(records)
}

/// `accuracy: 87.5% (105/120)` followed by one line per category.
pub fn format_report(report: &AccuracyReport) -> String {
    let pct = |x: Option<f64>| x.map_or("n/a".to_string(), |r| format!("{:.1}%", r * 100.0));
    let mut out = format!("accuracy: {} ({}/{})\n", pct(report.accuracy()), report.accurate, report.total);
    for v in Verdict::ALL {
        out.push_str(&format!("  {}: {} ({})\n", v.as_str(), report.count(v), pct(report.rate(v))));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use expando_core::index::{Granularity, IndexEntry, IndexKey};
    use rand::SeedableRng;

    fn logged(i: usize, kind: &str) -> LoggedExpansion {
        LoggedExpansion {
            tree_id: "t".into(),
            node_id: format!("t-n{i}"),
            paper_id: "p".into(),
            kind: kind.into(),
            question: "q".into(),
            answer: "a".into(),
        }
    }

    #[test]
    fn stratified_sample_covers_each_kind() {
        let mut log = Vec::new();
        for (i, kind) in ["define", "expand", "why", "suggested", "custom"].iter().cycle().take(200).enumerate() {
            log.push(logged(i, kind));
        }
        let mut rng = StdRng::seed_from_u64(1);
        let sample = sample_for_annotation(&log, 120, 25, &mut rng).unwrap();
        assert_eq!(sample.len(), 120);
        let ids: HashSet<&str> = sample.iter().map(|e| e.node_id.as_str()).collect();
        assert_eq!(ids.len(), 120);
        for kind in ANNOTATION_KINDS {
            assert!(sample.iter().filter(|e| e.kind == kind).count() >= 25);
        }
    }

    #[test]
    fn sampling_errors() {
        let mut rng = StdRng::seed_from_u64(1);
        assert!(sample_for_annotation(&[], 1, 0, &mut rng).is_err());
        let log: Vec<_> = (0..10).map(|i| logged(i, "define")).collect();
        assert!(sample_for_annotation(&log, 20, 5, &mut rng).is_err());
        assert!(sample_for_annotation(&log, 5, 6, &mut rng).is_err());
        assert_eq!(sample_for_annotation(&log, 10, 5, &mut rng).unwrap().len(), 10);
    }

    #[test]
    fn interactive_reprompts_on_bad_input() {
        let log = vec![logged(0, "why"), logged(1, "define")];
        let sample: Vec<&LoggedExpansion> = log.iter().collect();
        let mut input = "x\na\nmissing_content\n".as_bytes();
        let mut out = Vec::new();
        let recs = annotate_interactive(&sample, &mut input, &mut out).unwrap();
        assert_eq!(recs[0].verdict, Verdict::Accurate);
        assert_eq!(recs[1].verdict, Verdict::MissingContent);
        let mut short = "a\n".as_bytes();
        assert!(annotate_interactive(&sample, &mut short, &mut Vec::new()).is_err());
    }

    #[test]
    fn report_format() {
        let verdicts = std::iter::repeat_n(Verdict::Accurate, 105)
            .chain(std::iter::repeat_n(Verdict::InaccurateDetail, 10))
            .chain(std::iter::repeat_n(Verdict::Other, 5));
        let text = format_report(&AccuracyReport::from_verdicts(verdicts));
        assert!(text.starts_with("accuracy: 87.5% (105/120)\n"), "{text}");
        assert!(text.contains("inaccurate_detail: 10"));
    }

    #[test]
    fn retrieval_check_passes_and_rejects_dim() {
        let mut index = VectorIndex::new(4, Granularity::Chunk);
        let mut rng = StdRng::seed_from_u64(3);
        let entries = (0..50)
            .map(|i| IndexEntry {
                key: IndexKey { paper_id: "p".into(), granularity: Granularity::Chunk, ordinal: i },
                embedding: EmbeddingVector::normalized((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
                payload_text: String::new(),
            })
            .collect();
        index.upsert(entries).unwrap();
        let r = retrieval_check(&index, "p", 50, 12, Some(4), &mut rng).unwrap();
        assert!(r.passed && r.mismatched_rankings == 0, "{r:?}");
        assert!(retrieval_check(&index, "p", 1, 12, Some(5), &mut rng).is_err());
        let empty = retrieval_check(&index, "nothing", 10, 12, None, &mut rng).unwrap();
        assert!(empty.passed && empty.entries == 0);
    }
}
