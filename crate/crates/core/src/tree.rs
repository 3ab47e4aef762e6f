//! Expansion trees: threaded answers rooted at the abstract.
//!
//! Anchors address a span of the parent's display text in Unicode scalar
//! (char) offsets, half-open. Node texts never change after creation, so an
//! anchor that resolved once keeps resolving until its parent is removed.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::segment::sentence_spans;

/// Id of the implicit root node whose display text is the abstract.
pub const ROOT_ID: &str = "root";

pub const TREE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Anchor {
    pub node_id: String,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandableEntity {
    pub anchor: Anchor,
    pub surface_text: String,
    pub suggested_question: String,
    pub verified: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    Define,
    Expand,
    Why,
    Suggested,
    Custom(String),
}

impl QuestionKind {
    pub fn label(&self) -> &'static str {
        match self {
            QuestionKind::Define => "define",
            QuestionKind::Expand => "expand",
            QuestionKind::Why => "why",
            QuestionKind::Suggested => "suggested",
            QuestionKind::Custom(_) => "custom",
        }
    }

    /// Parses a static kind name; anything else becomes a custom question.
    pub fn from_cli(text: &str) -> QuestionKind {
        match text.trim().to_ascii_lowercase().as_str() {
            "define" => QuestionKind::Define,
            "expand" => QuestionKind::Expand,
            "why" => QuestionKind::Why,
            "suggested" => QuestionKind::Suggested,
            _ => QuestionKind::Custom(text.trim().to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    pub paper_id: String,
    pub paragraph_index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionNode {
    #[serde(rename = "id")]
    pub node_id: String,
    #[serde(rename = "parent")]
    pub parent_id: String,
    pub anchor: Anchor,
    /// Index of the parent sentence the block is shown below.
    pub after_sentence: usize,
    #[serde(rename = "kind")]
    pub question_kind: QuestionKind,
    #[serde(rename = "question")]
    pub resolved_question: String,
    #[serde(rename = "answer")]
    pub answer_text: String,
    pub attribution: Option<Attribution>,
    #[serde(rename = "entities")]
    pub child_entities: Vec<ExpandableEntity>,
    pub children: Vec<String>,
    pub depth: usize,
    pub collapsed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TreeError {
    UnknownNode(String),
    InvalidAnchor(String),
    DepthExceeded { max_depth: usize },
    RootImmutable,
}

impl core::fmt::Display for TreeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TreeError::UnknownNode(id) => write!(f, "unknown node '{id}'"),
            TreeError::InvalidAnchor(msg) => write!(f, "invalid anchor: {msg}"),
            TreeError::DepthExceeded { max_depth } => {
                write!(f, "expansion would exceed the maximum depth of {max_depth}")
            }
            TreeError::RootImmutable => f.write_str("the root is the abstract and cannot be changed"),
        }
    }
}

/// Byte offset of char index `idx` in `text`; `idx == char count` maps to
/// `text.len()`.
pub fn char_to_byte(text: &str, idx: usize) -> Option<usize> {
    if idx == 0 {
        return Some(0);
    }
    match text.char_indices().nth(idx) {
        Some((b, _)) => Some(b),
        None if text.chars().count() == idx => Some(text.len()),
        None => None,
    }
}

pub fn byte_to_char(text: &str, byte: usize) -> usize {
    text[..byte].chars().count()
}

/// Resolves `[char_start, char_end)` in `text` to its substring and the
/// index of the sentence containing the span start.
pub fn resolve_span(text: &str, char_start: usize, char_end: usize) -> Result<(&str, usize), TreeError> {
    if char_start >= char_end {
        return Err(TreeError::InvalidAnchor(format!("empty span [{char_start}, {char_end})")));
    }
    let (Some(start), Some(end)) = (char_to_byte(text, char_start), char_to_byte(text, char_end)) else {
        return Err(TreeError::InvalidAnchor(format!(
            "span [{char_start}, {char_end}) is outside a text of {} chars",
            text.chars().count()
        )));
    };
    let sentence = sentence_spans(text)
        .iter()
        .rposition(|r| r.start <= start)
        .unwrap_or(0);
    Ok((&text[start..end], sentence))
}

/// A reading session's expansions over one paper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTree {
    pub version: u32,
    pub tree_id: String,
    pub paper_id: String,
    pub root_text: String,
    pub root_entities: Vec<ExpandableEntity>,
    pub root_children: Vec<String>,
    next_seq: u64,
    /// Creation order.
    nodes: Vec<ExpansionNode>,
}

/// Everything needed to attach a new answer to the tree.
#[derive(Debug, Clone, PartialEq)]
pub struct NewNode {
    pub anchor: Anchor,
    pub question_kind: QuestionKind,
    pub resolved_question: String,
    pub answer_text: String,
    pub attribution: Option<Attribution>,
    pub child_entities: Vec<ExpandableEntity>,
}

impl ExpansionTree {
    pub fn new(
        tree_id: impl Into<String>,
        paper_id: impl Into<String>,
        root_text: impl Into<String>,
        root_entities: Vec<ExpandableEntity>,
    ) -> Self {
        ExpansionTree {
            version: TREE_FORMAT_VERSION,
            tree_id: tree_id.into(),
            paper_id: paper_id.into(),
            root_text: root_text.into(),
            root_entities,
            root_children: Vec::new(),
            next_seq: 1,
            nodes: Vec::new(),
        }
    }

    pub fn nodes(&self) -> &[ExpansionNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Id the next inserted node will receive.
    pub fn peek_next_id(&self) -> String {
        format!("{}-n{}", self.tree_id, self.next_seq)
    }

    fn seq_of(&self, node_id: &str) -> Option<u64> {
        let (tree, seq) = node_id.rsplit_once("-n")?;
        if tree != self.tree_id {
            return None;
        }
        seq.parse().ok()
    }

    fn position(&self, node_id: &str) -> Option<usize> {
        let seq = self.seq_of(node_id)?;
        self.nodes
            .binary_search_by_key(&seq, |n| self.seq_of(&n.node_id).unwrap_or(0))
            .ok()
    }

    pub fn node(&self, node_id: &str) -> Option<&ExpansionNode> {
        self.position(node_id).map(|i| &self.nodes[i])
    }

    fn node_mut(&mut self, node_id: &str) -> Option<&mut ExpansionNode> {
        self.position(node_id).map(move |i| &mut self.nodes[i])
    }

    pub fn contains(&self, node_id: &str) -> bool {
        node_id == ROOT_ID || self.position(node_id).is_some()
    }

    pub fn display_text(&self, node_id: &str) -> Option<&str> {
        if node_id == ROOT_ID {
            Some(&self.root_text)
        } else {
            self.node(node_id).map(|n| n.answer_text.as_str())
        }
    }

    pub fn entities_of(&self, node_id: &str) -> Option<&[ExpandableEntity]> {
        if node_id == ROOT_ID {
            Some(&self.root_entities)
        } else {
            self.node(node_id).map(|n| n.child_entities.as_slice())
        }
    }

    pub fn depth_of(&self, node_id: &str) -> Option<usize> {
        if node_id == ROOT_ID {
            Some(0)
        } else {
            self.node(node_id).map(|n| n.depth)
        }
    }

    pub fn children_of(&self, node_id: &str) -> Option<&[String]> {
        if node_id == ROOT_ID {
            Some(&self.root_children)
        } else {
            self.node(node_id).map(|n| n.children.as_slice())
        }
    }

    /// Resolves an anchor to its surface text and containing sentence.
    pub fn resolve_anchor(&self, anchor: &Anchor) -> Result<(&str, usize), TreeError> {
        let text = self
            .display_text(&anchor.node_id)
            .ok_or_else(|| TreeError::InvalidAnchor(format!("node '{}' does not exist", anchor.node_id)))?;
        resolve_span(text, anchor.char_start, anchor.char_end)
    }

    /// Checks that a child of `anchor.node_id` may be created.
    pub fn check_insert(&self, anchor: &Anchor, max_depth: usize) -> Result<usize, TreeError> {
        self.resolve_anchor(anchor)?;
        let depth = self.depth_of(&anchor.node_id).unwrap_or(0) + 1;
        if depth > max_depth {
            return Err(TreeError::DepthExceeded { max_depth });
        }
        Ok(depth)
    }

    /// Appends a node under the anchor's node, ordered among its siblings by
    /// the sentence it follows, then creation order.
    pub fn insert(&mut self, new: NewNode, max_depth: usize) -> Result<String, TreeError> {
        let depth = self.check_insert(&new.anchor, max_depth)?;
        let (_, after_sentence) = self.resolve_anchor(&new.anchor)?;
        let node_id = self.peek_next_id();
        let parent_id = new.anchor.node_id.clone();
        let node = ExpansionNode {
            node_id: node_id.clone(),
            parent_id: parent_id.clone(),
            anchor: new.anchor,
            after_sentence,
            question_kind: new.question_kind,
            resolved_question: new.resolved_question,
            answer_text: new.answer_text,
            attribution: new.attribution,
            child_entities: new.child_entities,
            children: Vec::new(),
            depth,
            collapsed: false,
        };

        let sibling_ids = self.children_of(&parent_id).map(<[String]>::to_vec).unwrap_or_default();
        let insert_at = sibling_ids
            .iter()
            .position(|id| self.node(id).is_some_and(|s| s.after_sentence > after_sentence))
            .unwrap_or(sibling_ids.len());
        self.next_seq += 1;
        self.nodes.push(node);
        let siblings = if parent_id == ROOT_ID {
            &mut self.root_children
        } else {
            &mut self.node_mut(&parent_id).expect("parent checked above").children
        };
        siblings.insert(insert_at, node_id.clone());
        Ok(node_id)
    }

    fn set_collapsed(&mut self, node_id: &str, collapsed: bool) -> Result<(), TreeError> {
        if node_id == ROOT_ID {
            return Err(TreeError::RootImmutable);
        }
        let node = self.node_mut(node_id).ok_or_else(|| TreeError::UnknownNode(node_id.to_string()))?;
        node.collapsed = collapsed;
        Ok(())
    }

    pub fn collapse(&mut self, node_id: &str) -> Result<(), TreeError> {
        self.set_collapsed(node_id, true)
    }

    pub fn expand_again(&mut self, node_id: &str) -> Result<(), TreeError> {
        self.set_collapsed(node_id, false)
    }

    /// True when the node or any ancestor is collapsed.
    pub fn is_hidden(&self, node_id: &str) -> bool {
        let mut current = node_id;
        while let Some(n) = self.node(current) {
            if n.collapsed {
                return true;
            }
            current = &n.parent_id;
        }
        false
    }

    /// Removes a node and its subtree. Returns the removed ids.
    pub fn remove(&mut self, node_id: &str) -> Result<Vec<String>, TreeError> {
        if node_id == ROOT_ID {
            return Err(TreeError::RootImmutable);
        }
        let parent = self
            .node(node_id)
            .ok_or_else(|| TreeError::UnknownNode(node_id.to_string()))?
            .parent_id
            .clone();
        let mut removed = Vec::new();
        let mut stack = alloc::vec![node_id.to_string()];
        while let Some(id) = stack.pop() {
            if let Some(n) = self.node(&id) {
                stack.extend(n.children.iter().cloned());
            }
            removed.push(id);
        }
        self.nodes.retain(|n| !removed.contains(&n.node_id));
        let siblings = if parent == ROOT_ID {
            &mut self.root_children
        } else {
            &mut self.node_mut(&parent).expect("parent of a live node exists").children
        };
        siblings.retain(|id| id != node_id);
        Ok(removed)
    }

    /// Structural invariant violations; empty when the tree is sound.
    pub fn integrity_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut seen = alloc::collections::BTreeSet::new();
        for n in &self.nodes {
            if !seen.insert(n.node_id.as_str()) {
                out.push(format!("duplicate node id {}", n.node_id));
            }
            let Some(parent_depth) = self.depth_of(&n.parent_id) else {
                out.push(format!("{} has missing parent {}", n.node_id, n.parent_id));
                continue;
            };
            if n.depth != parent_depth + 1 {
                out.push(format!("{} has depth {} under parent depth {parent_depth}", n.node_id, n.depth));
            }
            if !self.children_of(&n.parent_id).is_some_and(|c| c.contains(&n.node_id)) {
                out.push(format!("{} is not listed among its parent's children", n.node_id));
            }
            if n.anchor.node_id != n.parent_id {
                out.push(format!("{} is anchored outside its parent", n.node_id));
            } else if let Err(e) = self.resolve_anchor(&n.anchor) {
                out.push(format!("{}: {e}", n.node_id));
            }
            for child in &n.children {
                if self.node(child).is_none_or(|c| c.parent_id != n.node_id) {
                    out.push(format!("{} lists {child} as a child but is not its parent", n.node_id));
                }
            }
            // Walk to the root; more steps than nodes means a cycle.
            let mut current = n.parent_id.as_str();
            let mut steps = 0;
            while current != ROOT_ID {
                steps += 1;
                match self.node(current) {
                    Some(p) if steps <= self.nodes.len() => current = &p.parent_id,
                    _ => {
                        out.push(format!("{} does not reach the root", n.node_id));
                        break;
                    }
                }
            }
            for e in &n.child_entities {
                if e.anchor.node_id != n.node_id {
                    out.push(format!("entity in {} anchored to {}", n.node_id, e.anchor.node_id));
                }
            }
        }
        for child in &self.root_children {
            if self.node(child).is_none_or(|c| c.parent_id != ROOT_ID) {
                out.push(format!("root lists {child} but it is not a root child"));
            }
        }
        for e in &self.root_entities {
            match resolve_span(&self.root_text, e.anchor.char_start, e.anchor.char_end) {
                Ok((s, _)) if s == e.surface_text => {}
                _ => out.push(format!("root entity '{}' does not resolve", e.surface_text)),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const ABSTRACT: &str = "We propose a new framework. It addresses the ACTA task.";

    fn node(anchor: Anchor, answer: &str) -> NewNode {
        NewNode {
            anchor,
            question_kind: QuestionKind::Expand,
            resolved_question: "q".into(),
            answer_text: answer.into(),
            attribution: None,
            child_entities: Vec::new(),
        }
    }

    fn anchor(node: &str, start: usize, end: usize) -> Anchor {
        Anchor { node_id: node.into(), char_start: start, char_end: end }
    }

    #[test]
    fn insert_sets_depth_and_sentence() {
        let mut t = ExpansionTree::new("t", "p", ABSTRACT, vec![]);
        let a = t.insert(node(anchor(ROOT_ID, 45, 49), "ACTA is a task. It is hard."), 8).unwrap();
        assert_eq!(t.resolve_anchor(&t.node(&a).unwrap().anchor).unwrap(), ("ACTA", 1));
        let b = t.insert(node(anchor(&a, 0, 4), "More."), 8).unwrap();
        assert_eq!(t.node(&b).unwrap().depth, 2);
        assert_eq!(t.children_of(&a).unwrap(), &[b.clone()]);
        assert!(t.integrity_violations().is_empty());
    }

    #[test]
    fn siblings_follow_sentence_order() {
        let mut t = ExpansionTree::new("t", "p", ABSTRACT, vec![]);
        let late = t.insert(node(anchor(ROOT_ID, 45, 49), "x."), 8).unwrap();
        let early = t.insert(node(anchor(ROOT_ID, 13, 26), "y."), 8).unwrap();
        assert_eq!(t.root_children, vec![early, late]);
    }

    #[test]
    fn anchors_past_the_end_are_invalid() {
        let mut t = ExpansionTree::new("t", "p", ABSTRACT, vec![]);
        let before = t.clone();
        assert!(matches!(t.insert(node(anchor(ROOT_ID, 50, 80), "x"), 8), Err(TreeError::InvalidAnchor(_))));
        assert!(matches!(t.insert(node(anchor(ROOT_ID, 5, 5), "x"), 8), Err(TreeError::InvalidAnchor(_))));
        assert!(matches!(t.insert(node(anchor("t-n9", 0, 1), "x"), 8), Err(TreeError::InvalidAnchor(_))));
        assert_eq!(t, before);
    }

    #[test]
    fn depth_cap() {
        let mut t = ExpansionTree::new("t", "p", ABSTRACT, vec![]);
        let a = t.insert(node(anchor(ROOT_ID, 0, 2), "abc"), 1).unwrap();
        assert_eq!(t.insert(node(anchor(&a, 0, 1), "d"), 1), Err(TreeError::DepthExceeded { max_depth: 1 }));
    }

    #[test]
    fn collapse_round_trip_and_root_guard() {
        let mut t = ExpansionTree::new("t", "p", ABSTRACT, vec![]);
        let a = t.insert(node(anchor(ROOT_ID, 0, 2), "abc"), 8).unwrap();
        let b = t.insert(node(anchor(&a, 0, 1), "d"), 8).unwrap();
        let original = t.clone();
        t.collapse(&a).unwrap();
        t.collapse(&a).unwrap();
        assert!(t.is_hidden(&b));
        let once = t.clone();
        t.collapse(&a).unwrap();
        assert_eq!(t, once);
        t.expand_again(&a).unwrap();
        assert_eq!(t, original);
        assert_eq!(t.collapse(ROOT_ID), Err(TreeError::RootImmutable));
        assert_eq!(t.collapse("t-n77"), Err(TreeError::UnknownNode("t-n77".into())));
    }

    #[test]
    fn remove_takes_the_subtree() {
        let mut t = ExpansionTree::new("t", "p", ABSTRACT, vec![]);
        let a = t.insert(node(anchor(ROOT_ID, 0, 2), "abc def"), 8).unwrap();
        let b = t.insert(node(anchor(&a, 0, 3), "d"), 8).unwrap();
        let c = t.insert(node(anchor(&a, 4, 7), "e"), 8).unwrap();
        t.remove(&c).unwrap();
        assert_eq!(t.children_of(&a).unwrap(), &[b.clone()]);
        let removed = t.remove(&a).unwrap();
        assert_eq!(removed.len(), 2);
        assert!(t.is_empty());
        assert!(t.root_children.is_empty());
        assert_eq!(t.remove(ROOT_ID), Err(TreeError::RootImmutable));
    }

    #[test]
    fn char_offsets_handle_multibyte_text() {
        let text = "Café résumé. Naïve.";
        assert_eq!(resolve_span(text, 5, 11).unwrap(), ("résumé", 0));
        assert_eq!(resolve_span(text, 13, 18).unwrap(), ("Naïve", 1));
        assert!(resolve_span(text, 13, 20).is_err());
    }
}
