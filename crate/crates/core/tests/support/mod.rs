//! Brute-force oracles and synthetic data shared by property and acceptance
//! tests. Nothing here calls into the code under test's ranking or
//! windowing logic.

#![allow(dead_code)]

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::Rng;

/// Every `[i, i + size)` window with stride `size - overlap`, plus the
/// trailing partial window when the last full one misses the end, or the
/// whole stream when it is shorter than one window.
pub fn sliding_window_oracle(s: usize, size: usize, overlap: usize) -> Vec<(usize, usize)> {
    if s == 0 {
        return vec![];
    }
    if s < size {
        return vec![(0, s)];
    }
    let stride = size - overlap;
    let mut out = Vec::new();
    let mut i = 0;
    loop {
        if i + size <= s {
            out.push((i, i + size));
            if i + size == s {
                break;
            }
        } else {
            out.push((i, s));
            break;
        }
        i += stride;
    }
    out
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

/// Plain textbook cosine.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Full-scan ranking: score every entry, stable sort by descending score then
/// ascending ordinal, keep `k`. Scores use unit vectors so that identical
/// inputs produce bit-identical scores.
pub fn brute_force_top_k(entries: &[(usize, Vec<f64>)], query: &[f64], k: usize) -> Vec<(usize, f64)> {
    let q = unit(query);
    let mut scored: Vec<(usize, f64)> = entries
        .iter()
        .map(|(ord, v)| (*ord, unit(v).iter().zip(&q).map(|(a, b)| a * b).sum()))
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

const VOCAB: &[&str] = &[
    "model", "retrieval", "answer", "paper", "abstract", "reader", "question", "entity", "context",
    "paragraph", "sentence", "embedding", "vector", "study", "participant", "interface", "expansion",
    "tree", "score", "corpus", "dataset", "method", "baseline", "result", "accuracy", "prompt",
    "workflow", "analysis", "citation", "evidence", "summary", "domain", "task", "feature", "signal",
    "network", "graph", "query", "index", "session", "latency", "benchmark", "annotation", "error",
    "measure", "design", "system", "user", "field", "theory",
];

pub fn random_sentence(rng: &mut StdRng) -> String {
    let n = rng.gen_range(4..12);
    let mut words: Vec<String> = (0..n).map(|_| VOCAB.choose(rng).unwrap().to_string()).collect();
    let mut first = words[0].chars();
    words[0] = first.next().unwrap().to_uppercase().chain(first).collect();
    format!("{}.", words.join(" "))
}

/// Paragraphs of 1..=6 sentences with `total` sentences overall.
pub fn random_paragraphs(rng: &mut StdRng, total: usize) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut left = total;
    while left > 0 {
        let n = rng.gen_range(1..=6).min(left);
        out.push((0..n).map(|_| random_sentence(rng)).collect());
        left -= n;
    }
    out
}

pub fn random_vector(rng: &mut StdRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

/// Coarse integer vectors: many exact duplicates, so ties are common.
pub fn coarse_vector(rng: &mut StdRng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1i32..=1) as f64).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

/// Splits golden text into literal runs and `{Name}` placeholders by a plain
/// scan, independent of the crate's tokenizer.
pub fn split_golden(text: &str) -> (Vec<String>, Vec<String>) {
    let mut literals = vec![String::new()];
    let mut names = Vec::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '{' {
            let mut name = String::new();
            for d in chars.by_ref() {
                if d == '}' {
                    break;
                }
                name.push(d);
            }
            names.push(name);
            literals.push(String::new());
        } else {
            literals.last_mut().unwrap().push(c);
        }
    }
    (literals, names)
}

/// Checks that `rendered` is `literals` interleaved with arbitrary fills.
pub fn differs_only_at_placeholders(literals: &[String], rendered: &str) -> bool {
    if literals.len() == 1 {
        return rendered == literals[0];
    }
    let Some(mut rest) = rendered.strip_prefix(literals[0].as_str()) else { return false };
    for (i, lit) in literals.iter().enumerate().skip(1) {
        if i == literals.len() - 1 {
            return rest.ends_with(lit.as_str());
        }
        match rest.find(lit.as_str()) {
            Some(pos) => rest = &rest[pos + lit.len()..],
            None => return false,
        }
    }
    true
}

/// Structural problems in a serialized expansion tree, read straight from
/// its JSON: duplicate ids, dangling parents, cycles, depth drift and
/// anchors outside their parent's text.
pub fn tree_json_violations(v: &serde_json::Value) -> Vec<String> {
    let mut out = Vec::new();
    let Some(nodes) = v["nodes"].as_array() else { return vec!["no nodes array".into()] };
    let root_text = v["root_text"].as_str().unwrap_or_default();
    let mut by_id = std::collections::HashMap::new();
    for n in nodes {
        if by_id.insert(n["id"].as_str().unwrap_or_default(), n).is_some() {
            out.push(format!("duplicate id {}", n["id"]));
        }
    }
    for n in nodes {
        let id = n["id"].as_str().unwrap_or_default();
        let parent = n["parent"].as_str().unwrap_or_default();
        let depth = n["depth"].as_u64().unwrap_or(0);
        let parent_node = by_id.get(parent);
        let expected = match (parent, parent_node) {
            ("root", _) => 1,
            (_, Some(p)) => p["depth"].as_u64().unwrap_or(0) + 1,
            (_, None) => {
                out.push(format!("{id}: parent {parent} missing"));
                continue;
            }
        };
        if depth != expected {
            out.push(format!("{id}: depth {depth}, expected {expected}"));
        }
        let mut cur = parent;
        let mut steps = 0;
        while cur != "root" {
            cur = by_id.get(cur).and_then(|p| p["parent"].as_str()).unwrap_or("root");
            steps += 1;
            if steps > nodes.len() {
                out.push(format!("{id}: cycle"));
                break;
            }
        }
        let text = match parent_node {
            Some(p) => p["answer"].as_str().unwrap_or_default(),
            None => root_text,
        };
        let s = n["anchor"]["char_start"].as_u64().unwrap_or(0) as usize;
        let e = n["anchor"]["char_end"].as_u64().unwrap_or(0) as usize;
        if n["anchor"]["node_id"].as_str() != Some(parent) || s >= e || e > text.chars().count() {
            out.push(format!("{id}: anchor [{s}, {e}) does not resolve in {parent}"));
        }
    }
    out
}
