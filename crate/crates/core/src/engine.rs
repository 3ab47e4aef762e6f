//! The expansion engine: entity extraction with dry-run filtering, question
//! suggestion, retrieval-augmented answering, paragraph attribution and
//! expansion creation.
//!
//! The engine borrows its collaborators (embedder, chat provider, runtime,
//! cache, audit sink) and holds no state of its own, so one can be built per
//! request. Every fallible step of [`ExpansionEngine::create_expansion`] runs
//! before the tree is touched.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cell::RefCell;
use serde::{Deserialize, Serialize};

use crate::embed::{embed_one, EmbedError, Embedder};
use crate::index::{Hit, IndexError};
use crate::ingest::IndexSet;
use crate::llm::{complete, ChatProvider, GenerationParams, ProviderError, Runtime};
use crate::parse::{parse_answer, parse_entity_list, parse_question, EntityCandidate, ParsedAnswer};
use crate::prompt::{render_prompt, PromptError, PromptTemplate, RenderedPrompt, TemplateName};
use crate::segment::sentence_spans;
use crate::tree::{
    byte_to_char, Anchor, Attribution, ExpandableEntity, ExpansionTree, NewNode, QuestionKind, TreeError,
};

/// Which static buttons the question palette offers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaletteVariant {
    pub why_enabled: bool,
    pub editable_suggestion: bool,
}

impl PaletteVariant {
    /// Suggested, Define, Expand and Why.
    pub const BASE: PaletteVariant = PaletteVariant { why_enabled: true, editable_suggestion: false };
    /// Editable suggestion, Define and Expand; no Why.
    pub const REFINED: PaletteVariant = PaletteVariant { why_enabled: false, editable_suggestion: true };
}

/// Literal questions behind the static buttons. `{selection}` is replaced by
/// the selected text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StaticQuestions {
    pub define: String,
    pub expand: String,
    pub why: String,
}

impl Default for StaticQuestions {
    fn default() -> Self {
        StaticQuestions {
            define: "What does '{selection}' mean in this paper?".into(),
            expand: "Tell me more about '{selection}'.".into(),
            why: "Why '{selection}'? What is the motivation or justification?".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub answerer: GenerationParams,
    pub extractor: GenerationParams,
    pub top_k: usize,
    pub max_depth: usize,
    pub palette: PaletteVariant,
    pub questions: StaticQuestions,
    /// Bound to `{Response Length}` in the answering prompt.
    pub response_length: String,
    /// Token window of the answerer model; chunks that would overflow it
    /// are dropped from the context, lowest-ranked first.
    pub answerer_context_tokens: usize,
    pub anchor_word_cap: usize,
    /// `None` disables expiry.
    pub cache_ttl_ms: Option<u64>,
}

impl EngineConfig {
    pub fn new(answerer: GenerationParams, extractor: GenerationParams) -> Self {
        EngineConfig {
            answerer,
            extractor,
            top_k: 12,
            max_depth: 8,
            palette: PaletteVariant::BASE,
            questions: StaticQuestions::default(),
            response_length: "concise and no more than three sentences".into(),
            answerer_context_tokens: 16_385,
            anchor_word_cap: crate::parse::DEFAULT_ANCHOR_WORD_CAP,
            cache_ttl_ms: Some(24 * 60 * 60 * 1000),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EngineError {
    Provider(ProviderError),
    Embedding(EmbedError),
    Index(IndexError),
    Tree(TreeError),
    Prompt(PromptError),
    UnknownPaper(String),
    EmptyParagraphIndex(String),
    QuestionUnavailable(&'static str),
    EmptyQuestion,
}

impl core::fmt::Display for EngineError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            EngineError::Provider(e) => write!(f, "{e}"),
            EngineError::Embedding(e) => write!(f, "{e}"),
            EngineError::Index(e) => write!(f, "{e}"),
            EngineError::Tree(e) => write!(f, "{e}"),
            EngineError::Prompt(e) => write!(f, "{e}"),
            EngineError::UnknownPaper(id) => write!(f, "paper '{id}' is not ingested"),
            EngineError::EmptyParagraphIndex(id) => write!(f, "paper '{id}' has no paragraphs to attribute"),
            EngineError::QuestionUnavailable(kind) => {
                write!(f, "the '{kind}' question is not offered by this palette")
            }
            EngineError::EmptyQuestion => f.write_str("custom question is empty"),
        }
    }
}

impl From<ProviderError> for EngineError {
    fn from(e: ProviderError) -> Self {
        EngineError::Provider(e)
    }
}

impl From<EmbedError> for EngineError {
    fn from(e: EmbedError) -> Self {
        EngineError::Embedding(e)
    }
}

impl From<IndexError> for EngineError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::UnknownPaper(id) => EngineError::UnknownPaper(id),
            other => EngineError::Index(other),
        }
    }
}

impl From<TreeError> for EngineError {
    fn from(e: TreeError) -> Self {
        EngineError::Tree(e)
    }
}

impl From<PromptError> for EngineError {
    fn from(e: PromptError) -> Self {
        EngineError::Prompt(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AnswerOutcome {
    Answer { text: String, context_chunks: Vec<Hit> },
    NoAnswer,
}

impl AnswerOutcome {
    pub fn is_answer(&self) -> bool {
        matches!(self, AnswerOutcome::Answer { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CacheKey {
    pub paper_id: String,
    pub question: String,
}

/// Memo of `(paper_id, question) -> answer`.
pub trait AnswerCache {
    fn get(&self, key: &CacheKey, now_ms: u64) -> Option<AnswerOutcome>;
    fn put(&self, key: CacheKey, outcome: AnswerOutcome, now_ms: u64);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoCache;

impl AnswerCache for NoCache {
    fn get(&self, _key: &CacheKey, _now_ms: u64) -> Option<AnswerOutcome> {
        None
    }

    fn put(&self, _key: CacheKey, _outcome: AnswerOutcome, _now_ms: u64) {}
}

/// TTL map shared by the std crate behind its own lock, or used directly
/// through [`LocalCache`].
#[derive(Debug, Clone, Default)]
pub struct TtlMap {
    ttl_ms: Option<u64>,
    entries: BTreeMap<CacheKey, (u64, AnswerOutcome)>,
}

impl TtlMap {
    pub fn new(ttl_ms: Option<u64>) -> Self {
        TtlMap { ttl_ms, entries: BTreeMap::new() }
    }

    pub fn get(&mut self, key: &CacheKey, now_ms: u64) -> Option<AnswerOutcome> {
        let (stored_at, outcome) = self.entries.get(key)?;
        if self.ttl_ms.is_some_and(|ttl| now_ms.saturating_sub(*stored_at) >= ttl) {
            self.entries.remove(key);
            return None;
        }
        Some(outcome.clone())
    }

    pub fn put(&mut self, key: CacheKey, outcome: AnswerOutcome, now_ms: u64) {
        self.entries.insert(key, (now_ms, outcome));
    }

    /// Drops every entry for `paper_id`.
    pub fn remove_paper(&mut self, paper_id: &str) {
        self.entries.retain(|k, _| k.paper_id != paper_id);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Single-threaded cache.
#[derive(Debug, Default)]
pub struct LocalCache(RefCell<TtlMap>);

impl LocalCache {
    pub fn new(ttl_ms: Option<u64>) -> Self {
        LocalCache(RefCell::new(TtlMap::new(ttl_ms)))
    }
}

impl AnswerCache for LocalCache {
    fn get(&self, key: &CacheKey, now_ms: u64) -> Option<AnswerOutcome> {
        self.0.borrow_mut().get(key, now_ms)
    }

    fn put(&self, key: CacheKey, outcome: AnswerOutcome, now_ms: u64) {
        self.0.borrow_mut().put(key, outcome, now_ms)
    }
}

/// Receives every model exchange for the audit log.
pub trait AuditSink {
    fn record(&self, template: TemplateName, bindings: &BTreeMap<String, String>, raw_response: &str);
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoAudit;

impl AuditSink for NoAudit {
    fn record(&self, _template: TemplateName, _bindings: &BTreeMap<String, String>, _raw_response: &str) {}
}

/// The three templates the engine renders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateSet {
    pub entity_extraction: PromptTemplate,
    pub question_generation: PromptTemplate,
    pub question_answering: PromptTemplate,
}

impl Default for TemplateSet {
    fn default() -> Self {
        TemplateSet {
            entity_extraction: PromptTemplate::entity_extraction(),
            question_generation: PromptTemplate::question_generation(),
            question_answering: PromptTemplate::question_answering(),
        }
    }
}

/// Candidates the extractor proposed that did not become entities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DroppedEntity {
    NotInText(EntityCandidate),
    Overlapping(EntityCandidate),
    NoAnswer(EntityCandidate),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Extraction {
    pub entities: Vec<ExpandableEntity>,
    pub dropped: Vec<DroppedEntity>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoAnswerEvent {
    pub anchor: Anchor,
    pub question: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpansionOutcome {
    Created(String),
    NoAnswer(NoAnswerEvent),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionRequest {
    pub anchor: Anchor,
    pub kind: QuestionKind,
    /// Edited or precomputed suggested question for `Suggested`.
    pub suggested_question: Option<String>,
    /// Expected surface text; a mismatch marks the anchor stale.
    pub expected_text: Option<String>,
    pub bypass_cache: bool,
}

impl ExpansionRequest {
    pub fn new(anchor: Anchor, kind: QuestionKind) -> Self {
        ExpansionRequest { anchor, kind, suggested_question: None, expected_text: None, bypass_cache: false }
    }
}

/// Rough token estimate: four characters per token, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

pub struct ExpansionEngine<'a> {
    pub config: &'a EngineConfig,
    pub templates: &'a TemplateSet,
    pub embedder: &'a dyn Embedder,
    pub provider: &'a dyn ChatProvider,
    pub runtime: &'a dyn Runtime,
    pub cache: &'a dyn AnswerCache,
    pub audit: &'a dyn AuditSink,
}

impl<'a> ExpansionEngine<'a> {
    fn call(
        &self,
        template: &PromptTemplate,
        bindings: &BTreeMap<String, String>,
        params: &GenerationParams,
    ) -> Result<String, EngineError> {
        let prompt = render_prompt(template, bindings)?;
        self.call_rendered(&prompt, bindings, params)
    }

    fn call_rendered(
        &self,
        prompt: &RenderedPrompt,
        bindings: &BTreeMap<String, String>,
        params: &GenerationParams,
    ) -> Result<String, EngineError> {
        let result = complete(self.provider, prompt, params, self.runtime)?;
        self.audit.record(prompt.template, bindings, &result.raw_text);
        Ok(result.raw_text)
    }

    /// The literal question sent to the model for a palette choice.
    pub fn resolve_question(&self, kind: &QuestionKind, selection: &str, suggested: &str) -> String {
        resolve_question(&self.config.questions, kind, selection, suggested)
    }

    /// Retrieves the top chunks for `question` and asks the answerer.
    pub fn answer_question(
        &self,
        indices: &IndexSet,
        paper_id: &str,
        question: &str,
        use_cache: bool,
    ) -> Result<AnswerOutcome, EngineError> {
        let key = CacheKey { paper_id: paper_id.to_string(), question: question.to_string() };
        if use_cache {
            if let Some(hit) = self.cache.get(&key, self.runtime.now_ms()) {
                return Ok(hit);
            }
        }

        let query = embed_one(self.embedder, question)?;
        let retrieved = indices.chunks.top_k(&query, self.config.top_k, paper_id)?;

        let template = &self.templates.question_answering;
        let mut bindings = BTreeMap::new();
        bindings.insert("Question".to_string(), question.to_string());
        bindings.insert("Response Length".to_string(), self.config.response_length.clone());
        bindings.insert("Context".to_string(), String::new());
        let overhead = estimate_tokens(&render_prompt(template, &bindings)?.user_text)
            + estimate_tokens(&template.system_text);
        let mut budget = self
            .config
            .answerer_context_tokens
            .saturating_sub(overhead + self.config.answerer.max_output_tokens as usize);

        let mut context_chunks = Vec::new();
        let mut context = String::new();
        for hit in retrieved.hits {
            let Some(entry) = indices.chunks.get(&hit.key) else { continue };
            let cost = estimate_tokens(&entry.payload_text) + 1;
            if cost > budget {
                break;
            }
            budget -= cost;
            if !context.is_empty() {
                context.push_str("\n\n");
            }
            context.push_str(&entry.payload_text);
            context_chunks.push(hit);
        }
        bindings.insert("Context".to_string(), context);

        let raw = self.call(template, &bindings, &self.config.answerer)?;
        let outcome = match parse_answer(&raw) {
            ParsedAnswer::Answer(text) => AnswerOutcome::Answer { text, context_chunks },
            ParsedAnswer::NoAnswer => AnswerOutcome::NoAnswer,
        };
        if use_cache {
            self.cache.put(key, outcome.clone(), self.runtime.now_ms());
        }
        Ok(outcome)
    }

    /// The paragraph most similar to `answer_text`.
    pub fn attribute(&self, indices: &IndexSet, paper_id: &str, answer_text: &str) -> Result<Attribution, EngineError> {
        let query = embed_one(self.embedder, answer_text)?;
        let result = indices.paragraphs.top_k(&query, 1, paper_id)?;
        let best = result
            .hits
            .into_iter()
            .next()
            .ok_or_else(|| EngineError::EmptyParagraphIndex(paper_id.to_string()))?;
        Ok(Attribution { paper_id: paper_id.to_string(), paragraph_index: best.key.ordinal, score: best.score })
    }

    fn try_suggest_question(&self, selection: &str, sentence: &str, abstract_text: &str) -> Result<String, EngineError> {
        let mut bindings = BTreeMap::new();
        bindings.insert("Abstract".to_string(), abstract_text.to_string());
        bindings.insert("Entity".to_string(), selection.to_string());
        bindings.insert("Sentence".to_string(), sentence.to_string());
        let raw = self.call(&self.templates.question_generation, &bindings, &self.config.extractor)?;
        parse_question(&raw).ok_or(EngineError::EmptyQuestion)
    }

    /// One suggested question for a highlighted span. Falls back to the
    /// static Expand question when the model call fails.
    pub fn suggest_question(&self, selection: &str, sentence: &str, abstract_text: &str) -> String {
        self.try_suggest_question(selection, sentence, abstract_text)
            .unwrap_or_else(|_| self.resolve_question(&QuestionKind::Expand, selection, ""))
    }

    /// Finds expandable entities in `node_text` and keeps those whose Expand
    /// dry-run yields an answer.
    pub fn extract_entities(
        &self,
        indices: &IndexSet,
        paper_id: &str,
        node_id: &str,
        node_text: &str,
        abstract_text: &str,
        title: &str,
    ) -> Result<Extraction, EngineError> {
        let mut bindings = BTreeMap::new();
        bindings.insert("Title".to_string(), title.to_string());
        bindings.insert("Abstract".to_string(), node_text.to_string());
        let raw = self.call(&self.templates.entity_extraction, &bindings, &self.config.extractor)?;
        let candidates = parse_entity_list(&raw, self.config.anchor_word_cap);

        let mut extraction = Extraction::default();
        let placed = place_candidates(node_text, candidates, &mut extraction.dropped);
        let sentences = sentence_spans(node_text);

        for (range, candidate) in placed {
            let surface = &node_text[range.clone()];
            let expand = self.resolve_question(&QuestionKind::Expand, surface, "");
            if !self.answer_question(indices, paper_id, &expand, true)?.is_answer() {
                extraction.dropped.push(DroppedEntity::NoAnswer(candidate));
                continue;
            }
            let sentence = sentences
                .iter()
                .rev()
                .find(|s| s.start <= range.start)
                .map_or(node_text, |s| &node_text[s.clone()]);
            let suggested = match self.try_suggest_question(surface, sentence, abstract_text) {
                Ok(q) => q,
                Err(EngineError::Provider(_) | EngineError::EmptyQuestion) => candidate.question.clone(),
                Err(e) => return Err(e),
            };
            extraction.entities.push(ExpandableEntity {
                anchor: Anchor {
                    node_id: node_id.to_string(),
                    char_start: byte_to_char(node_text, range.start),
                    char_end: byte_to_char(node_text, range.end),
                },
                surface_text: surface.to_string(),
                suggested_question: suggested,
                verified: true,
            });
        }
        Ok(extraction)
    }

    /// Answers an anchored question and, on success, appends the expansion
    /// under the anchor. A `NoAnswer` leaves the tree untouched.
    pub fn create_expansion(
        &self,
        tree: &mut ExpansionTree,
        indices: &IndexSet,
        title: &str,
        request: &ExpansionRequest,
    ) -> Result<ExpansionOutcome, EngineError> {
        tree.check_insert(&request.anchor, self.config.max_depth)?;
        let (selection, _) = tree.resolve_anchor(&request.anchor)?;
        let selection = selection.to_string();
        if let Some(expected) = &request.expected_text {
            if *expected != selection {
                return Err(TreeError::InvalidAnchor(format!(
                    "anchor text is '{selection}', expected '{expected}'"
                ))
                .into());
            }
        }

        let question = match &request.kind {
            QuestionKind::Why if !self.config.palette.why_enabled => {
                return Err(EngineError::QuestionUnavailable("why"))
            }
            QuestionKind::Custom(q) if q.trim().is_empty() => return Err(EngineError::EmptyQuestion),
            QuestionKind::Suggested => {
                let suggested = match &request.suggested_question {
                    Some(q) if !q.trim().is_empty() => q.clone(),
                    _ => self.suggestion_for(tree, &request.anchor, &selection),
                };
                self.resolve_question(&request.kind, &selection, &suggested)
            }
            kind => self.resolve_question(kind, &selection, ""),
        };

        let use_cache = !(request.bypass_cache && matches!(request.kind, QuestionKind::Custom(_)));
        let paper_id = tree.paper_id.clone();
        let text = match self.answer_question(indices, &paper_id, &question, use_cache)? {
            AnswerOutcome::NoAnswer => {
                return Ok(ExpansionOutcome::NoAnswer(NoAnswerEvent { anchor: request.anchor.clone(), question }))
            }
            AnswerOutcome::Answer { text, .. } => text,
        };
        let attribution = self.attribute(indices, &paper_id, &text)?;
        let node_id = tree.peek_next_id();
        let extraction =
            self.extract_entities(indices, &paper_id, &node_id, &text, &tree.root_text.clone(), title)?;

        let id = tree.insert(
            NewNode {
                anchor: request.anchor.clone(),
                question_kind: request.kind.clone(),
                resolved_question: question,
                answer_text: text,
                attribution: Some(attribution),
                child_entities: extraction.entities,
            },
            self.config.max_depth,
        )?;
        Ok(ExpansionOutcome::Created(id))
    }

    /// The stored suggestion for an entity with exactly this anchor, or a
    /// fresh one generated on the fly.
    fn suggestion_for(&self, tree: &ExpansionTree, anchor: &Anchor, selection: &str) -> String {
        if let Some(e) = tree.entities_of(&anchor.node_id).and_then(|es| {
            es.iter().find(|e| e.anchor.char_start == anchor.char_start && e.anchor.char_end == anchor.char_end)
        }) {
            return e.suggested_question.clone();
        }
        let parent_text = tree.display_text(&anchor.node_id).unwrap_or_default();
        let sentence = crate::tree::char_to_byte(parent_text, anchor.char_start)
            .and_then(|b| sentence_spans(parent_text).into_iter().rev().find(|s| s.start <= b))
            .map_or(parent_text, |s| &parent_text[s]);
        self.suggest_question(selection, sentence, &tree.root_text)
    }
}

/// Maps a palette choice to its literal question.
pub fn resolve_question(questions: &StaticQuestions, kind: &QuestionKind, selection: &str, suggested: &str) -> String {
    let fill = |t: &str| t.replace("{selection}", selection);
    match kind {
        QuestionKind::Define => fill(&questions.define),
        QuestionKind::Expand => fill(&questions.expand),
        QuestionKind::Why => fill(&questions.why),
        QuestionKind::Suggested => suggested.to_string(),
        QuestionKind::Custom(q) => q.clone(),
    }
}

/// Binds each candidate to the first occurrence of its phrase not already
/// taken by an earlier candidate, then keeps the earliest-starting of any
/// overlapping spans. Returned in reading order.
pub fn place_candidates(
    text: &str,
    candidates: Vec<EntityCandidate>,
    dropped: &mut Vec<DroppedEntity>,
) -> Vec<(core::ops::Range<usize>, EntityCandidate)> {
    let mut bound: Vec<(core::ops::Range<usize>, EntityCandidate)> = Vec::new();
    for c in candidates {
        let start = text
            .match_indices(c.anchor_phrase.as_str())
            .map(|(i, _)| i)
            .find(|i| !bound.iter().any(|(r, _)| r.start == *i));
        match start {
            Some(i) => bound.push((i..i + c.anchor_phrase.len(), c)),
            None => dropped.push(DroppedEntity::NotInText(c)),
        }
    }
    // Stable sort keeps candidate order among equal starts.
    bound.sort_by_key(|(r, _)| r.start);
    let mut kept: Vec<(core::ops::Range<usize>, EntityCandidate)> = Vec::new();
    for (range, c) in bound {
        if kept.last().is_some_and(|(last, _)| range.start < last.end) {
            dropped.push(DroppedEntity::Overlapping(c));
        } else {
            kept.push((range, c));
        }
    }
    kept
}
