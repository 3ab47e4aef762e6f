//! Application state shared by the HTTP service and the CLI: the committed
//! indices, paper records, expansion trees and the engine's collaborators.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use expando_core::annotate::LoggedExpansion;
use expando_core::document::CanonicalDocument;
use expando_core::embed::{Embedder, HashingEmbedder};
use expando_core::engine::{
    EngineConfig, EngineError, ExpansionEngine, ExpansionOutcome, ExpansionRequest, NoAnswerEvent, TemplateSet,
};
use expando_core::ingest::{self, document_from_parser_output, paper_id_for, IndexSet, IngestError, ParserOutput};
use expando_core::llm::{ChatProvider, ChatRequest, ChatResponse, ProviderError, Runtime};
use expando_core::segment::sentence_spans;
use expando_core::tree::{char_to_byte, Anchor, ExpandableEntity, ExpansionNode, ExpansionTree, TreeError, ROOT_ID};
use expando_core::PaperDocument;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Config, EmbeddingProviderKind};
use crate::providers::{
    FixtureError, HttpChatProvider, HttpEmbedder, LimitedProvider, MockProvider, ParserClient, ParserError,
    SystemRuntime,
};
use crate::store::{is_safe_id, JsonlAudit, PaperRecord, PaperStatus, SharedCache, Store, StoreError};

#[derive(Debug)]
pub enum AppError {
    NotFound(String),
    Validation(String),
    /// The request is well formed but conflicts with current state.
    Conflict { message: String, retryable: bool },
    Engine(EngineError),
    Ingest(IngestError),
    Parser(ParserError),
    Store(StoreError),
    Fixture(FixtureError),
}

impl std::fmt::Display for AppError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AppError::NotFound(m) | AppError::Validation(m) => f.write_str(m),
            AppError::Conflict { message, .. } => f.write_str(message),
            AppError::Engine(e) => write!(f, "{e}"),
            AppError::Ingest(e) => write!(f, "{e}"),
            AppError::Parser(e) => write!(f, "{e}"),
            AppError::Store(e) => write!(f, "{e}"),
            AppError::Fixture(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for AppError {}

impl From<EngineError> for AppError {
    fn from(e: EngineError) -> Self {
        AppError::Engine(e)
    }
}

impl From<TreeError> for AppError {
    fn from(e: TreeError) -> Self {
        AppError::Engine(EngineError::Tree(e))
    }
}

impl From<IngestError> for AppError {
    fn from(e: IngestError) -> Self {
        AppError::Ingest(e)
    }
}

impl From<StoreError> for AppError {
    fn from(e: StoreError) -> Self {
        AppError::Store(e)
    }
}

impl From<ParserError> for AppError {
    fn from(e: ParserError) -> Self {
        AppError::Parser(e)
    }
}

/// Stands in when no chat endpoint or fixture is configured.
struct Unconfigured;

impl ChatProvider for Unconfigured {
    fn send(&self, _request: &ChatRequest, _timeout: Duration) -> Result<ChatResponse, ProviderError> {
        Err(ProviderError::Unreachable { attempts: 1, detail: "no chat endpoint configured".into() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperSummary {
    pub paper_id: String,
    pub status: PaperStatus,
    pub title: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub authors: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub venue: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub year: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperPage {
    pub papers: Vec<PaperSummary>,
    pub total: usize,
    pub page: usize,
    pub page_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaperDetail {
    pub paper_id: String,
    pub status: PaperStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub title: String,
    pub source_uri: String,
    pub chunk_count: usize,
    pub paragraph_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entities_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbstractView {
    pub paper_id: String,
    pub title: String,
    pub text: String,
    pub sentences: Vec<String>,
    pub entities: Vec<ExpandableEntity>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub tree_id: String,
    pub paper_id: String,
    /// True when an ancestor is collapsed.
    pub hidden: bool,
    pub node: ExpansionNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionView {
    pub node_id: String,
    pub paper_id: String,
    pub paragraph_index: usize,
    pub paragraph_text: String,
    pub section: Option<String>,
    pub page: Option<u32>,
    pub score: f64,
    pub source_locator: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExpansionResult {
    Created(NodeView),
    NoAnswer(NoAnswerEvent),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub paper_id: String,
    pub status: PaperStatus,
    pub chunk_count: usize,
    pub paragraph_count: usize,
    pub entity_count: usize,
}

/// A document ready for ingestion plus where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Submission {
    pub document: PaperDocument,
}

pub struct App {
    pub config: Config,
    engine_config: EngineConfig,
    templates: TemplateSet,
    store: Store,
    embedder: Box<dyn Embedder>,
    provider: Box<dyn ChatProvider>,
    runtime: Box<dyn Runtime>,
    cache: SharedCache,
    audit: JsonlAudit,
    parser: Option<ParserClient>,
    indices: RwLock<Arc<IndexSet>>,
    papers: RwLock<BTreeMap<String, PaperRecord>>,
    trees: Mutex<HashMap<String, Arc<Mutex<ExpansionTree>>>>,
    commit_lock: Mutex<()>,
}

fn lock<T>(m: &Mutex<T>) -> std::sync::MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// The tree a node id belongs to.
pub fn tree_of(node_id: &str) -> Option<&str> {
    node_id.rsplit_once("-n").map(|(tree, _)| tree).filter(|t| !t.is_empty())
}

impl App {
    /// Builds providers from the configuration and loads persisted state.
    pub fn from_config(config: Config) -> Result<App, AppError> {
        let provider: Box<dyn ChatProvider> = if let Some(path) = &config.chat.mock_fixture {
            Box::new(MockProvider::from_file(path).map_err(AppError::Fixture)?)
        } else if let Some(endpoint) = &config.chat.endpoint {
            Box::new(LimitedProvider::new(
                HttpChatProvider::new(endpoint.clone(), config.chat.api_key_env.as_deref()),
                config.chat.max_concurrent,
            ))
        } else {
            Box::new(Unconfigured)
        };
        Self::with_provider(config, provider)
    }

    /// Like [`App::from_config`] with an explicit chat provider.
    pub fn with_provider(config: Config, provider: Box<dyn ChatProvider>) -> Result<App, AppError> {
        let ing = &config.ingestion;
        let embedder: Box<dyn Embedder> = match config.embedding.provider {
            EmbeddingProviderKind::Hashing => Box::new(HashingEmbedder::new(ing.embedding_dim)),
            EmbeddingProviderKind::Http => Box::new(HttpEmbedder::new(
                config.embedding.endpoint.clone().unwrap_or_default(),
                ing.embedding_model_id.clone(),
                ing.embedding_dim,
                Duration::from_millis(config.embedding.timeout_ms),
                config.embedding.api_key_env.as_deref(),
            )),
        };
        let parser = config.parser.endpoint.as_ref().map(|endpoint| {
            ParserClient::new(endpoint.clone(), Duration::from_millis(config.parser.timeout_ms.unwrap_or(120_000)))
        });

        let store = Store::open(&config.data_dir)?;
        let indices = store.load_indices(ing.embedding_dim)?;
        let mut papers = BTreeMap::new();
        for mut record in store.load_papers()? {
            let indexed = indices.chunks.contains_paper(&record.paper_id);
            let stale = match record.status {
                PaperStatus::Processing => Some("ingestion was interrupted"),
                PaperStatus::Ready if !indexed => Some("index entries are missing"),
                _ => None,
            };
            if let Some(reason) = stale {
                log::warn!("marking {} failed: {reason}", record.paper_id);
                record.status = PaperStatus::Failed;
                record.error = Some(reason.into());
                store.save_paper(&record)?;
            }
            papers.insert(record.paper_id.clone(), record);
        }

        let engine_config = config.engine_config();
        Ok(App {
            cache: SharedCache::new(engine_config.cache_ttl_ms),
            audit: JsonlAudit::new(store.audit_path()),
            engine_config,
            templates: TemplateSet::default(),
            embedder,
            provider,
            runtime: Box::new(SystemRuntime),
            parser,
            indices: RwLock::new(Arc::new(indices)),
            papers: RwLock::new(papers),
            trees: Mutex::new(HashMap::new()),
            commit_lock: Mutex::new(()),
            store,
            config,
        })
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn engine_config(&self) -> &EngineConfig {
        &self.engine_config
    }

    fn engine(&self) -> ExpansionEngine<'_> {
        ExpansionEngine {
            config: &self.engine_config,
            templates: &self.templates,
            embedder: &*self.embedder,
            provider: &*self.provider,
            runtime: &*self.runtime,
            cache: &self.cache,
            audit: &self.audit,
        }
    }

    /// The committed indices at this moment.
    pub fn snapshot(&self) -> Arc<IndexSet> {
        self.indices.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn record(&self, paper_id: &str) -> Option<PaperRecord> {
        self.papers.read().unwrap_or_else(|e| e.into_inner()).get(paper_id).cloned()
    }

    fn save_record(&self, record: PaperRecord) -> Result<(), AppError> {
        self.store.save_paper(&record)?;
        self.papers.write().unwrap_or_else(|e| e.into_inner()).insert(record.paper_id.clone(), record);
        Ok(())
    }

    fn ready_record(&self, paper_id: &str) -> Result<PaperRecord, AppError> {
        let record = self.record(paper_id).ok_or_else(|| AppError::NotFound(format!("unknown paper '{paper_id}'")))?;
        match record.status {
            PaperStatus::Ready => Ok(record),
            PaperStatus::Processing => Err(AppError::Conflict {
                message: format!("paper '{paper_id}' is still processing"),
                retryable: true,
            }),
            PaperStatus::Failed => Err(AppError::Conflict {
                message: format!(
                    "paper '{paper_id}' failed to ingest: {}",
                    record.error.as_deref().unwrap_or("unknown error")
                ),
                retryable: false,
            }),
        }
    }

    /// Interprets an upload: a PDF (sent to the parser), a canonical document
    /// or parser output, both as JSON.
    pub fn prepare_submission(&self, body: &[u8]) -> Result<Submission, AppError> {
        if body.iter().all(u8::is_ascii_whitespace) {
            return Err(AppError::Validation("request body is empty".into()));
        }
        let upload_uri = || format!("upload:sha256:{}", sha256_hex(body));
        if body.starts_with(b"%PDF") {
            let parser = self.parser.as_ref().ok_or_else(|| {
                AppError::Parser(ParserError::Unavailable("no parser endpoint configured".into()))
            })?;
            let output = parser.parse(body, &upload_uri())?;
            return Ok(Submission { document: document_from_parser_output(&output)? });
        }

        let value: serde_json::Value = serde_json::from_slice(body)
            .map_err(|e| AppError::Validation(format!("body is neither a PDF nor JSON: {e}")))?;
        let document = if value.get("version").is_some() {
            let mut canonical: CanonicalDocument = serde_json::from_value(value)
                .map_err(|e| AppError::Validation(format!("invalid canonical document: {e}")))?;
            if canonical.source_uri.is_empty() {
                canonical.source_uri = upload_uri();
            }
            if canonical.paper_id.is_empty() {
                canonical.paper_id = paper_id_for(&canonical.source_uri);
            }
            canonical.into_document().map_err(|e| AppError::Validation(format!("invalid canonical document: {e}")))?
        } else if value.get("sections").is_some() {
            let mut output: ParserOutput = serde_json::from_value(value)
                .map_err(|e| AppError::Validation(format!("invalid parser output: {e}")))?;
            if output.source_uri.is_empty() {
                output.source_uri = upload_uri();
            }
            document_from_parser_output(&output)?
        } else {
            return Err(AppError::Validation(
                "JSON body must be a canonical document (with \"version\") or parser output (with \"sections\")".into(),
            ));
        };
        if !is_safe_id(&document.paper_id) {
            return Err(AppError::Validation(format!("paper id '{}' is not a safe identifier", document.paper_id)));
        }
        Ok(Submission { document })
    }

    /// Records the paper as processing. Ingestion itself runs in
    /// [`App::run_ingest`].
    pub fn begin_ingest(&self, submission: &Submission) -> Result<String, AppError> {
        let doc = &submission.document;
        let _guard = lock(&self.commit_lock);
        if let Some(existing) = self.record(&doc.paper_id) {
            if existing.status == PaperStatus::Processing {
                return Err(AppError::Conflict {
                    message: format!("paper '{}' is already being ingested", doc.paper_id),
                    retryable: true,
                });
            }
        }
        self.save_record(PaperRecord {
            paper_id: doc.paper_id.clone(),
            status: PaperStatus::Processing,
            error: None,
            document: doc.to_canonical(),
            entities: Vec::new(),
            entities_error: None,
            chunk_count: 0,
            paragraph_count: 0,
        })?;
        Ok(doc.paper_id.clone())
    }

    /// Embeds, commits and extracts abstract entities. Failures leave the
    /// paper marked failed with the error recorded.
    pub fn run_ingest(&self, submission: Submission) -> Result<IngestSummary, AppError> {
        let paper_id = submission.document.paper_id.clone();
        let canonical = submission.document.to_canonical();
        match self.ingest_inner(submission.document) {
            Ok(summary) => Ok(summary),
            Err(e) => {
                log::error!("ingestion of {paper_id} failed: {e}");
                self.save_record(PaperRecord {
                    paper_id,
                    status: PaperStatus::Failed,
                    error: Some(e.to_string()),
                    document: canonical,
                    entities: Vec::new(),
                    entities_error: None,
                    chunk_count: 0,
                    paragraph_count: 0,
                })?;
                Err(e)
            }
        }
    }

    /// Synchronous ingestion for the CLI.
    pub fn ingest_now(&self, body: &[u8]) -> Result<IngestSummary, AppError> {
        let submission = self.prepare_submission(body)?;
        self.begin_ingest(&submission)?;
        self.run_ingest(submission)
    }

    fn ingest_inner(&self, document: PaperDocument) -> Result<IngestSummary, AppError> {
        let prepared = ingest::prepare(document, &self.config.ingestion, &*self.embedder)?;
        let paper_id = prepared.document.paper_id.clone();
        let committed = {
            let _guard = lock(&self.commit_lock);
            let current = self.snapshot();
            let was_present = current.chunks.contains_paper(&paper_id);
            let mut next = (*current).clone();
            next.commit(&prepared)?;
            self.store.persist_commit(&next, &paper_id, was_present)?;
            let next = Arc::new(next);
            *self.indices.write().unwrap_or_else(|e| e.into_inner()) = next.clone();
            next
        };
        self.cache.remove_paper(&paper_id);

        let doc = &prepared.document;
        let abstract_text = doc.abstract_text();
        let (entities, entities_error) =
            match self.engine().extract_entities(&committed, &paper_id, ROOT_ID, &abstract_text, &abstract_text, &doc.title) {
                Ok(x) => (x.entities, None),
                Err(e) => {
                    log::warn!("entity extraction for {paper_id} failed: {e}");
                    (Vec::new(), Some(e.to_string()))
                }
            };
        let summary = IngestSummary {
            paper_id: paper_id.clone(),
            status: PaperStatus::Ready,
            chunk_count: prepared.chunks.len(),
            paragraph_count: prepared.paragraphs.len(),
            entity_count: entities.len(),
        };
        self.save_record(PaperRecord {
            paper_id,
            status: PaperStatus::Ready,
            error: None,
            document: doc.to_canonical(),
            entities,
            entities_error,
            chunk_count: summary.chunk_count,
            paragraph_count: summary.paragraph_count,
        })?;
        Ok(summary)
    }

    /// Case-insensitive substring match on title and authors, sorted by
    /// title. Pages are 1-based.
    pub fn list_papers(&self, query: Option<&str>, page: usize, page_size: usize) -> Result<PaperPage, AppError> {
        if page == 0 || page_size == 0 || page_size > 100 {
            return Err(AppError::Validation("page must be >= 1 and page_size in 1..=100".into()));
        }
        let needle = query.map(|q| q.trim().to_lowercase()).filter(|q| !q.is_empty());
        let papers = self.papers.read().unwrap_or_else(|e| e.into_inner());
        let mut matched: Vec<PaperSummary> = papers
            .values()
            .filter(|r| {
                needle.as_ref().is_none_or(|n| {
                    r.document.title.to_lowercase().contains(n)
                        || r.document.metadata.authors.as_ref().is_some_and(|a| a.to_lowercase().contains(n))
                })
            })
            .map(|r| PaperSummary {
                paper_id: r.paper_id.clone(),
                status: r.status,
                title: r.document.title.clone(),
                authors: r.document.metadata.authors.clone(),
                venue: r.document.metadata.venue.clone(),
                year: r.document.metadata.year.clone(),
            })
            .collect();
        matched.sort_by(|a, b| a.title.to_lowercase().cmp(&b.title.to_lowercase()).then(a.paper_id.cmp(&b.paper_id)));
        let total = matched.len();
        let papers = matched.into_iter().skip((page - 1) * page_size).take(page_size).collect();
        Ok(PaperPage { papers, total, page, page_size })
    }

    pub fn paper(&self, paper_id: &str) -> Result<PaperDetail, AppError> {
        let r = self.record(paper_id).ok_or_else(|| AppError::NotFound(format!("unknown paper '{paper_id}'")))?;
        Ok(PaperDetail {
            paper_id: r.paper_id,
            status: r.status,
            error: r.error,
            title: r.document.title,
            source_uri: r.document.source_uri,
            chunk_count: r.chunk_count,
            paragraph_count: r.paragraph_count,
            entities_error: r.entities_error,
        })
    }

    pub fn abstract_view(&self, paper_id: &str) -> Result<AbstractView, AppError> {
        let r = self.ready_record(paper_id)?;
        let text = expando_core::document::join_sentences(r.document.abstract_sentences.iter().map(String::as_str));
        Ok(AbstractView {
            paper_id: r.paper_id,
            title: r.document.title,
            text,
            sentences: r.document.abstract_sentences,
            entities: r.entities,
        })
    }

    /// The tree, loading it from disk or creating it for `paper_id`.
    fn tree_handle(&self, paper_id: &str, tree_id: &str, create: bool) -> Result<Arc<Mutex<ExpansionTree>>, AppError> {
        if !is_safe_id(tree_id) {
            return Err(AppError::Validation(format!("tree id '{tree_id}' is not a safe identifier")));
        }
        let mut trees = lock(&self.trees);
        let handle = match trees.get(tree_id) {
            Some(h) => h.clone(),
            None => {
                let tree = match self.store.load_tree(tree_id)? {
                    Some(t) => t,
                    None if create => {
                        let r = self.ready_record(paper_id)?;
                        let text =
                            expando_core::document::join_sentences(r.document.abstract_sentences.iter().map(String::as_str));
                        ExpansionTree::new(tree_id, paper_id, &text, r.entities)
                    }
                    None => return Err(AppError::NotFound(format!("unknown tree '{tree_id}'"))),
                };
                let h = Arc::new(Mutex::new(tree));
                trees.insert(tree_id.to_string(), h.clone());
                h
            }
        };
        drop(trees);
        let owner = lock(&handle).paper_id.clone();
        if owner != paper_id {
            return Err(AppError::Validation(format!("tree '{tree_id}' belongs to paper '{owner}'")));
        }
        Ok(handle)
    }

    fn handle_for_node(&self, node_id: &str) -> Result<Arc<Mutex<ExpansionTree>>, AppError> {
        let unknown = || AppError::NotFound(format!("unknown node '{node_id}'"));
        let tree_id = tree_of(node_id).ok_or_else(unknown)?;
        if !is_safe_id(tree_id) {
            return Err(unknown());
        }
        let mut trees = lock(&self.trees);
        if let Some(h) = trees.get(tree_id) {
            return Ok(h.clone());
        }
        let tree = self.store.load_tree(tree_id)?.ok_or_else(unknown)?;
        let h = Arc::new(Mutex::new(tree));
        trees.insert(tree_id.to_string(), h.clone());
        Ok(h)
    }

    /// Anchors the first occurrence of `text` in the display text of
    /// `parent` (the abstract for the root).
    pub fn anchor_for_text(&self, paper_id: &str, tree_id: &str, parent: &str, text: &str) -> Result<Anchor, AppError> {
        if text.trim().is_empty() {
            return Err(TreeError::InvalidAnchor("anchor text is empty".into()).into());
        }
        let handle = self.tree_handle(paper_id, tree_id, true)?;
        let tree = lock(&handle);
        let haystack = tree.display_text(parent).ok_or_else(|| TreeError::UnknownNode(parent.to_string()))?;
        let byte = haystack
            .find(text)
            .ok_or_else(|| TreeError::InvalidAnchor(format!("'{text}' does not occur in node '{parent}'")))?;
        let char_start = haystack[..byte].chars().count();
        Ok(Anchor { node_id: parent.to_string(), char_start, char_end: char_start + text.chars().count() })
    }

    pub fn tree(&self, paper_id: &str, tree_id: &str) -> Result<ExpansionTree, AppError> {
        if self.record(paper_id).is_none() {
            return Err(AppError::NotFound(format!("unknown paper '{paper_id}'")));
        }
        let handle = self.tree_handle(paper_id, tree_id, false)?;
        let tree = lock(&handle).clone();
        Ok(tree)
    }

    /// Answers an anchored question and grows the tree, creating the tree on
    /// first use.
    pub fn create_expansion(
        &self,
        paper_id: &str,
        tree_id: &str,
        request: &ExpansionRequest,
    ) -> Result<ExpansionResult, AppError> {
        let record = self.ready_record(paper_id)?;
        let handle = self.tree_handle(paper_id, tree_id, true)?;
        let indices = self.snapshot();
        let mut tree = lock(&handle);
        let outcome = self.engine().create_expansion(&mut tree, &indices, &record.document.title, request)?;
        match outcome {
            ExpansionOutcome::NoAnswer(event) => Ok(ExpansionResult::NoAnswer(event)),
            ExpansionOutcome::Created(node_id) => {
                self.store.save_tree(&tree)?;
                let node = tree.node(&node_id).cloned().ok_or_else(|| TreeError::UnknownNode(node_id.clone()))?;
                self.store.log_expansion(&LoggedExpansion {
                    tree_id: tree_id.to_string(),
                    node_id: node_id.clone(),
                    paper_id: paper_id.to_string(),
                    kind: node.question_kind.label().to_string(),
                    question: node.resolved_question.clone(),
                    answer: node.answer_text.clone(),
                })?;
                Ok(ExpansionResult::Created(NodeView {
                    tree_id: tree_id.to_string(),
                    paper_id: paper_id.to_string(),
                    hidden: tree.is_hidden(&node_id),
                    node,
                }))
            }
        }
    }

    fn edit_tree(
        &self,
        paper_id: &str,
        tree_id: &str,
        edit: impl FnOnce(&mut ExpansionTree) -> Result<(), TreeError>,
    ) -> Result<ExpansionTree, AppError> {
        if self.record(paper_id).is_none() {
            return Err(AppError::NotFound(format!("unknown paper '{paper_id}'")));
        }
        let handle = self.tree_handle(paper_id, tree_id, false)?;
        let mut tree = lock(&handle);
        edit(&mut tree)?;
        self.store.save_tree(&tree)?;
        Ok(tree.clone())
    }

    pub fn collapse(&self, paper_id: &str, tree_id: &str, node_id: &str) -> Result<ExpansionTree, AppError> {
        self.edit_tree(paper_id, tree_id, |t| t.collapse(node_id))
    }

    pub fn expand_again(&self, paper_id: &str, tree_id: &str, node_id: &str) -> Result<ExpansionTree, AppError> {
        self.edit_tree(paper_id, tree_id, |t| t.expand_again(node_id))
    }

    /// Removes a node and its subtree, returning the removed ids.
    pub fn delete(&self, node_id: &str) -> Result<Vec<String>, AppError> {
        if node_id == ROOT_ID {
            return Err(TreeError::RootImmutable.into());
        }
        let handle = self.handle_for_node(node_id)?;
        let mut tree = lock(&handle);
        let removed = tree.remove(node_id)?;
        self.store.save_tree(&tree)?;
        Ok(removed)
    }

    pub fn node(&self, node_id: &str) -> Result<NodeView, AppError> {
        let handle = self.handle_for_node(node_id)?;
        let tree = lock(&handle);
        let node = tree.node(node_id).cloned().ok_or_else(|| AppError::NotFound(format!("unknown node '{node_id}'")))?;
        Ok(NodeView { tree_id: tree.tree_id.clone(), paper_id: tree.paper_id.clone(), hidden: tree.is_hidden(node_id), node })
    }

    pub fn attribution(&self, node_id: &str) -> Result<AttributionView, AppError> {
        let view = self.node(node_id)?;
        let attribution = view
            .node
            .attribution
            .ok_or_else(|| AppError::NotFound(format!("node '{node_id}' has no attribution")))?;
        let record = self
            .record(&attribution.paper_id)
            .ok_or_else(|| AppError::NotFound(format!("unknown paper '{}'", attribution.paper_id)))?;
        let paragraph = record
            .document
            .paragraphs
            .iter()
            .find(|p| p.index == attribution.paragraph_index)
            .ok_or_else(|| AppError::NotFound(format!("paragraph {} is gone", attribution.paragraph_index)))?;
        let mut locator = format!("{}#paragraph={}", record.document.source_uri, paragraph.index);
        if let Some(page) = paragraph.page {
            locator.push_str(&format!("&page={page}"));
        }
        Ok(AttributionView {
            node_id: node_id.to_string(),
            paper_id: attribution.paper_id,
            paragraph_index: paragraph.index,
            paragraph_text: expando_core::document::join_sentences(paragraph.sentences.iter().map(String::as_str)),
            section: paragraph.section.clone(),
            page: paragraph.page,
            score: attribution.score,
            source_locator: locator,
        })
    }

    /// A suggested question for an arbitrary span. Without a tree the anchor
    /// must point into the abstract.
    pub fn suggest(&self, paper_id: &str, tree_id: Option<&str>, anchor: &Anchor) -> Result<String, AppError> {
        let record = self.ready_record(paper_id)?;
        let abstract_text =
            expando_core::document::join_sentences(record.document.abstract_sentences.iter().map(String::as_str));
        let parent_text = match tree_id {
            Some(t) => {
                let handle = self.tree_handle(paper_id, t, true)?;
                let tree = lock(&handle);
                tree.display_text(&anchor.node_id)
                    .ok_or_else(|| TreeError::UnknownNode(anchor.node_id.clone()))?
                    .to_string()
            }
            None if anchor.node_id == ROOT_ID => abstract_text.clone(),
            None => return Err(TreeError::UnknownNode(anchor.node_id.clone()).into()),
        };
        let (selection, _) = expando_core::tree::resolve_span(&parent_text, anchor.char_start, anchor.char_end)?;
        let start = char_to_byte(&parent_text, anchor.char_start).unwrap_or(0);
        let sentence = sentence_spans(&parent_text)
            .into_iter()
            .rev()
            .find(|s| s.start <= start)
            .map_or(parent_text.as_str(), |s| &parent_text[s]);
        Ok(self.engine().suggest_question(selection, sentence, &abstract_text))
    }
}
