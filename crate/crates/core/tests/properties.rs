mod support;

use expando_core::chunk::{window_spans, ChunkingParams};
use expando_core::document::{validate_document, CanonicalDocument, Metadata, ParagraphInput};
use expando_core::embed::HashingEmbedder;
use expando_core::engine::{EngineConfig, ExpansionEngine, NoAudit, NoCache, TemplateSet};
use expando_core::index::{Granularity, IndexEntry, IndexKey, VectorIndex};
use expando_core::ingest::{prepare, IndexSet, IngestionConfig};
use expando_core::llm::{ChatProvider, ChatRequest, ChatResponse, GenerationParams, NullRuntime, ProviderError};
use expando_core::tree::{Anchor, ExpansionTree, NewNode, QuestionKind, ROOT_ID};
use expando_core::{build_chunks, EmbeddingVector, PaperDocument};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::time::Duration;

use support::*;

fn doc_with(rng: &mut StdRng, sentences: usize) -> PaperDocument {
    let paragraphs = random_paragraphs(rng, sentences)
        .into_iter()
        .map(|sentences| ParagraphInput { section: Some("Body".into()), page: Some(1), sentences })
        .collect();
    PaperDocument::from_parts(
        "paper-test",
        "Synthetic",
        vec!["An abstract sentence.".into()],
        paragraphs,
        "file://synthetic",
        Metadata::default(),
    )
}

fn index_from(entries: &[(usize, Vec<f64>)], dim: usize) -> VectorIndex {
    let mut index = VectorIndex::new(dim, Granularity::Chunk);
    let batch = entries
        .iter()
        .map(|(ord, v)| IndexEntry {
            key: IndexKey { paper_id: "p".into(), granularity: Granularity::Chunk, ordinal: *ord },
            embedding: EmbeddingVector::normalized(v.clone()).unwrap(),
            payload_text: format!("entry {ord}"),
        })
        .collect();
    index.upsert(batch).unwrap();
    index
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn windows_match_oracle(s in 0usize..500, size in 1usize..6, overlap_frac in 0usize..6) {
        let overlap = overlap_frac % size;
        let params = ChunkingParams { chunk_size: size, chunk_overlap: overlap };
        prop_assert_eq!(window_spans(s, params), sliding_window_oracle(s, size, overlap));
    }

    #[test]
    fn default_chunk_laws(seed in any::<u64>(), s in 0usize..120) {
        let mut rng = StdRng::seed_from_u64(seed);
        let doc = doc_with(&mut rng, s);
        let chunks = build_chunks(&doc, ChunkingParams::default());
        let expected = if s >= 3 { s - 2 } else { usize::from(s > 0) };
        prop_assert_eq!(chunks.len(), expected);
        for pair in chunks.windows(2) {
            let inter = pair[0].end.min(pair[1].end).saturating_sub(pair[1].start.max(pair[0].start));
            prop_assert_eq!(inter, 2.min(pair[0].len() - 1));
        }
        // Reconstruction: first sentence of each chunk plus the tail of the last.
        let mut stream: Vec<usize> = chunks.iter().map(|c| c.start).collect();
        if let Some(last) = chunks.last() {
            stream.extend(last.start + 1..last.end);
        }
        prop_assert_eq!(stream, (0..s).collect::<Vec<_>>());
        for c in &chunks {
            let joined = doc.body_sentences[c.start..c.end].iter().map(|s| s.text.as_str()).collect::<Vec<_>>().join(" ");
            prop_assert_eq!(&c.text, &joined);
            prop_assert_eq!(c.paragraphs.0, doc.body_sentences[c.start].paragraph_index.unwrap());
            prop_assert_eq!(c.paragraphs.1, doc.body_sentences[c.end - 1].paragraph_index.unwrap());
        }
    }

    #[test]
    fn top_k_matches_brute_force(seed in any::<u64>(), n in 1usize..200, k in 1usize..20, coarse in any::<bool>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let dim = 6;
        let gen = |rng: &mut StdRng| if coarse { coarse_vector(rng, dim) } else { random_vector(rng, dim) };
        let entries: Vec<(usize, Vec<f64>)> = (0..n).map(|i| (i * 3 + 1, gen(&mut rng))).collect();
        let index = index_from(&entries, dim);
        let query = gen(&mut rng);
        let got = index.top_k(&EmbeddingVector::normalized(query.clone()).unwrap(), k, "p").unwrap();
        let want = brute_force_top_k(&entries, &query, k);
        let got_keys: Vec<usize> = got.hits.iter().map(|h| h.key.ordinal).collect();
        let want_keys: Vec<usize> = want.iter().map(|w| w.0).collect();
        prop_assert_eq!(got_keys, want_keys);
        for (h, (ord, _)) in got.hits.iter().zip(&want) {
            let raw = &entries.iter().find(|e| e.0 == *ord).unwrap().1;
            prop_assert!((h.score - cosine(raw, &query)).abs() < 1e-12);
        }
    }

    #[test]
    fn ranking_is_scale_free(seed in any::<u64>(), scale in 1e-6f64..1e6) {
        let mut rng = StdRng::seed_from_u64(seed);
        let entries: Vec<(usize, Vec<f64>)> = (0..100).map(|i| (i, random_vector(&mut rng, 8))).collect();
        let index = index_from(&entries, 8);
        let q = random_vector(&mut rng, 8);
        let scaled: Vec<f64> = q.iter().map(|x| x * scale).collect();
        let keys = |v: Vec<f64>| -> Vec<usize> {
            index.top_k(&EmbeddingVector::normalized(v).unwrap(), 12, "p").unwrap().hits.iter().map(|h| h.key.ordinal).collect()
        };
        prop_assert_eq!(keys(q), keys(scaled));
    }

    #[test]
    fn canonical_round_trip(seed in any::<u64>(), s in 1usize..60) {
        let mut rng = StdRng::seed_from_u64(seed);
        let doc = doc_with(&mut rng, s);
        prop_assert!(validate_document(&doc).is_valid());
        let json = serde_json::to_string(&doc.to_canonical()).unwrap();
        let back: CanonicalDocument = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(back.into_document().unwrap(), doc);
    }
}

struct Unused;

impl ChatProvider for Unused {
    fn send(&self, _request: &ChatRequest, _timeout: Duration) -> Result<ChatResponse, ProviderError> {
        Err(ProviderError::Refusal("not used".into()))
    }
}

#[test]
fn attribution_is_paragraph_argmax() {
    let embedder = HashingEmbedder::new(256);
    let cfg = IngestionConfig::default();
    let config = EngineConfig::new(GenerationParams::new("a"), GenerationParams::new("b"));
    let templates = TemplateSet::default();
    let engine = ExpansionEngine {
        config: &config,
        templates: &templates,
        embedder: &embedder,
        provider: &Unused,
        runtime: &NullRuntime,
        cache: &NoCache,
        audit: &NoAudit,
    };
    let mut rng = StdRng::seed_from_u64(7);
    for paper in 0..20 {
        let s = rng.gen_range(1..40);
        let mut doc = doc_with(&mut rng, s);
        doc.paper_id = format!("paper-{paper}");
        let prepared = prepare(doc, &cfg, &embedder).unwrap();
        let mut indices = IndexSet::new(cfg.embedding_dim);
        indices.commit(&prepared).unwrap();
        let paragraphs: Vec<Vec<f64>> =
            prepared.document.body_paragraphs.iter().map(|p| embedder.embed_text(&p.text)).collect();

        for _ in 0..5 {
            let answer = random_sentence(&mut rng);
            let a = engine.attribute(&indices, &prepared.document.paper_id, &answer).unwrap();
            let q = embedder.embed_text(&answer);
            let sims: Vec<f64> = paragraphs.iter().map(|p| cosine(p, &q)).collect();
            let best = argmax(&sims);
            assert_eq!(a.paragraph_index, best);
            assert!((a.score - sims[best]).abs() < 1e-9);
        }
        for p in &prepared.document.body_paragraphs {
            let a = engine.attribute(&indices, &prepared.document.paper_id, &p.text).unwrap();
            assert!((a.score - 1.0).abs() < 1e-6);
            assert_eq!(prepared.document.body_paragraphs[a.paragraph_index].text, p.text);
        }
    }
}

fn check_tree_json(tree: &ExpansionTree) {
    let v = serde_json::to_value(tree).unwrap();
    let violations = tree_json_violations(&v);
    assert!(violations.is_empty(), "{violations:?}");
}

#[test]
fn tree_fuzz_keeps_integrity() {
    let root = "We propose a new framework. It addresses the ACTA task.";
    let answers = ["It is modular. It scales.", "The task labels arguments.", "Short."];
    let mut rng = StdRng::seed_from_u64(11);
    let mut tree = ExpansionTree::new("t", "p", root, vec![]);
    for step in 0..3000 {
        let ids: Vec<String> = std::iter::once(ROOT_ID.to_string())
            .chain(tree.nodes().iter().map(|n| n.node_id.clone()))
            .collect();
        let target = ids[rng.gen_range(0..ids.len())].clone();
        match rng.gen_range(0..10) {
            0..=5 => {
                let len = tree.display_text(&target).unwrap().chars().count();
                let start = rng.gen_range(0..len + 2);
                let end = start + rng.gen_range(0..4);
                let new = NewNode {
                    anchor: Anchor { node_id: target.clone(), char_start: start, char_end: end },
                    question_kind: QuestionKind::Expand,
                    resolved_question: "q".into(),
                    answer_text: answers[step % answers.len()].into(),
                    attribution: None,
                    child_entities: vec![],
                };
                let before = tree.clone();
                if tree.insert(new, 8).is_err() {
                    assert_eq!(tree, before);
                }
            }
            6 | 7 => {
                let _ = if rng.gen() { tree.collapse(&target) } else { tree.expand_again(&target) };
            }
            _ => {
                if target != ROOT_ID && rng.gen_range(0..4) == 0 {
                    tree.remove(&target).unwrap();
                }
            }
        }
        assert!(tree.integrity_violations().is_empty(), "{:?}", tree.integrity_violations());
        if step % 100 == 0 {
            check_tree_json(&tree);
        }
    }
}
