//! Provider adapters: the fixture-driven mock chat provider, HTTP clients
//! for chat, embeddings and the PDF parser service, a wall-clock runtime and
//! a concurrency limiter.

use std::path::Path;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use expando_core::document::Metadata;
use expando_core::embed::{EmbedError, Embedder};
use expando_core::ingest::{ParsedSection, ParserOutput};
use expando_core::llm::{ChatProvider, ChatRequest, ChatResponse, ProviderError, Role, Runtime, TokenUsage};
use expando_core::prompt::{PromptTemplate, TemplateName};
use serde::{Deserialize, Serialize};

/// One canned reply. A rule matches when its template (if given) matches the
/// request's system prompt and every `contains` string occurs in the user
/// message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default)]
    pub template: Option<TemplateName>,
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub response: Option<String>,
    /// `refusal`, `timeout` or `unreachable` instead of a response.
    #[serde(default)]
    pub fail: Option<MockFailure>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MockFailure {
    Refusal,
    Timeout,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockFixture {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    /// Reply per template when no rule matches.
    #[serde(default)]
    pub defaults: std::collections::BTreeMap<TemplateName, String>,
}

/// Deterministic chat provider answering from a [`MockFixture`].
#[derive(Debug, Clone)]
pub struct MockProvider {
    fixture: MockFixture,
    systems: Vec<(TemplateName, String)>,
}

#[derive(Debug)]
pub enum FixtureError {
    Io(std::io::Error),
    Json(serde_json::Error),
    Invalid(String),
}

impl std::fmt::Display for FixtureError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FixtureError::Io(e) => write!(f, "cannot read mock fixture: {e}"),
            FixtureError::Json(e) => write!(f, "invalid mock fixture: {e}"),
            FixtureError::Invalid(msg) => write!(f, "invalid mock fixture: {msg}"),
        }
    }
}

impl std::error::Error for FixtureError {}

impl MockProvider {
    pub fn new(fixture: MockFixture) -> Result<Self, FixtureError> {
        for (i, rule) in fixture.rules.iter().enumerate() {
            if rule.response.is_some() == rule.fail.is_some() {
                return Err(FixtureError::Invalid(format!("rule {i} needs exactly one of response/fail")));
            }
        }
        let systems = [TemplateName::EntityExtraction, TemplateName::QuestionGeneration, TemplateName::QuestionAnswering]
            .into_iter()
            .map(|n| (n, PromptTemplate::shipped(n).system_text))
            .collect();
        Ok(MockProvider { fixture, systems })
    }

    pub fn from_json(text: &str) -> Result<Self, FixtureError> {
        Self::new(serde_json::from_str(text).map_err(FixtureError::Json)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, FixtureError> {
        Self::from_json(&std::fs::read_to_string(path).map_err(FixtureError::Io)?)
    }

    fn template_of(&self, request: &ChatRequest) -> Option<TemplateName> {
        let system = request.messages.iter().find(|m| m.role == Role::System)?;
        self.systems.iter().find(|(_, s)| *s == system.content).map(|(n, _)| *n)
    }
}

impl ChatProvider for MockProvider {
    fn send(&self, request: &ChatRequest, _timeout: Duration) -> Result<ChatResponse, ProviderError> {
        let template = self.template_of(request);
        let user: String = request
            .messages
            .iter()
            .filter(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        let rule = self.fixture.rules.iter().find(|r| {
            r.template.is_none_or(|t| Some(t) == template) && r.contains.iter().all(|c| user.contains(c.as_str()))
        });
        let text = match rule {
            Some(MockRule { fail: Some(f), .. }) => {
                return Err(match f {
                    MockFailure::Refusal => ProviderError::Refusal("mock refusal".into()),
                    MockFailure::Timeout => ProviderError::Timeout { attempts: 1 },
                    MockFailure::Unreachable => {
                        ProviderError::Unreachable { attempts: 1, detail: "mock unreachable".into() }
                    }
                })
            }
            Some(MockRule { response: Some(r), .. }) => r.clone(),
            _ => template
                .and_then(|t| self.fixture.defaults.get(&t).cloned())
                .ok_or_else(|| ProviderError::Refusal("no mock rule matches the request".into()))?,
        };
        Ok(ChatResponse { text, usage: None })
    }
}

fn bearer(env_var: Option<&str>) -> Option<String> {
    env_var.and_then(|v| std::env::var(v).ok()).map(|k| format!("Bearer {k}"))
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).build().into()
}

/// Chat client speaking `{model_id, messages, temperature, max_tokens} -> {text}`.
pub struct HttpChatProvider {
    endpoint: String,
    auth: Option<String>,
    agent: ureq::Agent,
}

impl HttpChatProvider {
    pub fn new(endpoint: impl Into<String>, api_key_env: Option<&str>) -> Self {
        HttpChatProvider { endpoint: endpoint.into(), auth: bearer(api_key_env), agent: agent() }
    }
}

#[derive(Deserialize)]
struct WireChatResponse {
    text: String,
    #[serde(default)]
    usage: Option<TokenUsage>,
}

fn transport_error(e: ureq::Error) -> ProviderError {
    match e {
        ureq::Error::Timeout(_) => ProviderError::Timeout { attempts: 1 },
        other => ProviderError::Unreachable { attempts: 1, detail: other.to_string() },
    }
}

impl ChatProvider for HttpChatProvider {
    fn send(&self, request: &ChatRequest, timeout: Duration) -> Result<ChatResponse, ProviderError> {
        let mut req = self.agent.post(&self.endpoint).config().timeout_global(Some(timeout)).build();
        if let Some(auth) = &self.auth {
            req = req.header("Authorization", auth);
        }
        let mut resp = req.send_json(request).map_err(transport_error)?;
        let status = resp.status().as_u16();
        match status {
            200..=299 => {
                let body: WireChatResponse = resp.body_mut().read_json().map_err(transport_error)?;
                Ok(ChatResponse { text: body.text, usage: body.usage })
            }
            408 => Err(ProviderError::Timeout { attempts: 1 }),
            429 | 500..=599 => Err(ProviderError::Unreachable { attempts: 1, detail: format!("HTTP {status}") }),
            _ => {
                let detail = resp.body_mut().read_to_string().unwrap_or_default();
                Err(ProviderError::Refusal(format!("HTTP {status}: {detail}")))
            }
        }
    }
}

/// Embedding client speaking `{model_id, texts} -> {vectors}`.
pub struct HttpEmbedder {
    endpoint: String,
    model_id: String,
    dim: usize,
    timeout: Duration,
    auth: Option<String>,
    agent: ureq::Agent,
}

impl HttpEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        model_id: impl Into<String>,
        dim: usize,
        timeout: Duration,
        api_key_env: Option<&str>,
    ) -> Self {
        HttpEmbedder {
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            dim,
            timeout,
            auth: bearer(api_key_env),
            agent: agent(),
        }
    }
}

#[derive(Serialize)]
struct WireEmbedRequest<'a> {
    model_id: &'a str,
    texts: &'a [String],
}

#[derive(Deserialize)]
struct WireEmbedResponse {
    vectors: Vec<Vec<f64>>,
}

impl Embedder for HttpEmbedder {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let mut req = self.agent.post(&self.endpoint).config().timeout_global(Some(self.timeout)).build();
        if let Some(auth) = &self.auth {
            req = req.header("Authorization", auth);
        }
        let to_embed_error = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => EmbedError::Timeout,
            other => EmbedError::Provider(other.to_string()),
        };
        let mut resp = req
            .send_json(WireEmbedRequest { model_id: &self.model_id, texts })
            .map_err(to_embed_error)?;
        if !resp.status().is_success() {
            return Err(EmbedError::Provider(format!("HTTP {}", resp.status().as_u16())));
        }
        let body: WireEmbedResponse = resp.body_mut().read_json().map_err(to_embed_error)?;
        Ok(body.vectors)
    }
}

/// Structured full text as returned by the parser service.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct ExternalParse {
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub authors: Vec<ExternalAuthor>,
    #[serde(default)]
    pub venue: Option<String>,
    #[serde(default)]
    pub year: Option<serde_json::Value>,
    #[serde(default, rename = "abstract")]
    pub abstract_paragraphs: Vec<ExternalParagraph>,
    #[serde(default)]
    pub body_text: Vec<ExternalParagraph>,
    #[serde(default)]
    pub captions: Vec<ExternalParagraph>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ExternalAuthor {
    #[serde(default)]
    pub first: String,
    #[serde(default)]
    pub last: String,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ExternalParagraph {
    pub text: String,
    #[serde(default)]
    pub section: Option<String>,
}

/// Maps the parser service's schema onto [`ParserOutput`]. Consecutive body
/// paragraphs with the same section become one section; captions follow the
/// body as an unlabeled section.
pub fn map_external(parse: ExternalParse, source_uri: &str) -> ParserOutput {
    let mut sections: Vec<ParsedSection> = Vec::new();
    for p in parse.body_text {
        let heading = p.section.filter(|s| !s.trim().is_empty());
        match sections.last_mut() {
            Some(last) if last.heading == heading => last.paragraphs.push(p.text),
            _ => sections.push(ParsedSection { heading, paragraphs: vec![p.text] }),
        }
    }
    if !parse.captions.is_empty() {
        sections.push(ParsedSection {
            heading: Some("Captions".into()),
            paragraphs: parse.captions.into_iter().map(|c| c.text).collect(),
        });
    }
    let authors: Vec<String> = parse
        .authors
        .iter()
        .map(|a| format!("{} {}", a.first, a.last).trim().to_string())
        .filter(|a| !a.is_empty())
        .collect();
    let year = parse.year.map(|y| match y {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    });
    ParserOutput {
        title: parse.title,
        abstract_text: parse.abstract_paragraphs.into_iter().map(|p| p.text).collect::<Vec<_>>().join(" "),
        sections,
        source_uri: source_uri.to_string(),
        metadata: Metadata { authors: (!authors.is_empty()).then(|| authors.join(", ")), venue: parse.venue, year },
    }
}

#[derive(Debug)]
pub enum ParserError {
    Unavailable(String),
    Rejected(String),
}

impl std::fmt::Display for ParserError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParserError::Unavailable(m) => write!(f, "parser service unavailable: {m}"),
            ParserError::Rejected(m) => write!(f, "parser service rejected the document: {m}"),
        }
    }
}

impl std::error::Error for ParserError {}

/// Posts a PDF to the parser service.
pub struct ParserClient {
    endpoint: String,
    timeout: Duration,
    agent: ureq::Agent,
}

impl ParserClient {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        ParserClient { endpoint: endpoint.into(), timeout, agent: agent() }
    }

    pub fn parse(&self, pdf: &[u8], source_uri: &str) -> Result<ParserOutput, ParserError> {
        let mut resp = self
            .agent
            .post(&self.endpoint)
            .config()
            .timeout_global(Some(self.timeout))
            .build()
            .header("Content-Type", "application/pdf")
            .send(pdf)
            .map_err(|e| ParserError::Unavailable(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            let err = format!("HTTP {status}");
            return Err(if status >= 500 { ParserError::Unavailable(err) } else { ParserError::Rejected(err) });
        }
        let parsed: ExternalParse = resp.body_mut().read_json().map_err(|e| ParserError::Rejected(e.to_string()))?;
        Ok(map_external(parsed, source_uri))
    }
}

/// Wall clock and real sleeps.
#[derive(Debug, Clone, Copy, Default)]
pub struct SystemRuntime;

impl Runtime for SystemRuntime {
    fn now_ms(&self) -> u64 {
        SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
    }

    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration)
    }
}

/// Caps the number of in-flight requests to the wrapped provider.
pub struct LimitedProvider<P> {
    inner: P,
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl<P: ChatProvider> LimitedProvider<P> {
    pub fn new(inner: P, max_concurrent: usize) -> Self {
        LimitedProvider { inner, max: max_concurrent.max(1), in_flight: Mutex::new(0), freed: Condvar::new() }
    }
}

impl<P: ChatProvider> ChatProvider for LimitedProvider<P> {
    fn send(&self, request: &ChatRequest, timeout: Duration) -> Result<ChatResponse, ProviderError> {
        let deadline = Instant::now() + timeout;
        {
            let mut n = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
            while *n >= self.max {
                let left = deadline.saturating_duration_since(Instant::now());
                if left.is_zero() {
                    return Err(ProviderError::Timeout { attempts: 1 });
                }
                n = self.freed.wait_timeout(n, left).unwrap_or_else(|e| e.into_inner()).0;
            }
            *n += 1;
        }
        let result = self.inner.send(request, deadline.saturating_duration_since(Instant::now()));
        *self.in_flight.lock().unwrap_or_else(|e| e.into_inner()) -= 1;
        self.freed.notify_one();
        result
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use expando_core::llm::{to_request, GenerationParams};
    use expando_core::prompt::{bindings, render_prompt};
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn qa_request(question: &str) -> ChatRequest {
        let t = PromptTemplate::question_answering();
        let b = bindings([("Question", question), ("Context", "ctx"), ("Response Length", "short")]);
        to_request(&render_prompt(&t, &b).unwrap(), &GenerationParams::new("m"))
    }

    #[test]
    fn first_matching_rule_wins() {
        let mock = MockProvider::from_json(
            r#"{"rules":[
                {"template":"question_answering","contains":["Question: What is X?"],"response":"X is a thing."},
                {"contains":["Question:"],"response":"generic"}
            ],"defaults":{"question_answering":"No answer."}}"#,
        )
        .unwrap();
        let send = |q: &str| mock.send(&qa_request(q), Duration::from_secs(1)).unwrap().text;
        assert_eq!(send("What is X?"), "X is a thing.");
        assert_eq!(send("What is Y?"), "generic");
    }

    #[test]
    fn defaults_and_failures() {
        let mock = MockProvider::from_json(
            r#"{"rules":[{"contains":["boom"],"fail":"timeout"}],"defaults":{"question_answering":"No answer."}}"#,
        )
        .unwrap();
        assert_eq!(mock.send(&qa_request("calm"), Duration::ZERO).unwrap().text, "No answer.");
        assert_eq!(mock.send(&qa_request("boom"), Duration::ZERO), Err(ProviderError::Timeout { attempts: 1 }));
    }

    #[test]
    fn rule_with_both_response_and_failure_is_rejected() {
        assert!(MockProvider::from_json(r#"{"rules":[{"response":"a","fail":"refusal"}]}"#).is_err());
        assert!(MockProvider::from_json(r#"{"rules":[{}]}"#).is_err());
    }

    #[test]
    fn external_schema_mapping() {
        let parse: ExternalParse = serde_json::from_str(
            r#"{"title":"T","authors":[{"first":"Ada","last":"Lovelace"}],"year":1843,
                "abstract":[{"text":"An abstract."}],
                "body_text":[{"text":"P1.","section":"Intro"},{"text":"P2.","section":"Intro"},{"text":"P3.","section":"Method"}],
                "captions":[{"text":"Figure 1: A loom."}]}"#,
        )
        .unwrap();
        let out = map_external(parse, "file://x.pdf");
        assert_eq!(out.sections.len(), 3);
        assert_eq!(out.sections[0].paragraphs, vec!["P1.", "P2."]);
        assert_eq!(out.metadata.authors.as_deref(), Some("Ada Lovelace"));
        assert_eq!(out.metadata.year.as_deref(), Some("1843"));
        assert_eq!(out.abstract_text, "An abstract.");
    }

    struct Slow {
        active: AtomicUsize,
        peak: AtomicUsize,
    }

    impl ChatProvider for Slow {
        fn send(&self, _r: &ChatRequest, _t: Duration) -> Result<ChatResponse, ProviderError> {
            let now = self.active.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(20));
            self.active.fetch_sub(1, Ordering::SeqCst);
            Ok(ChatResponse { text: "ok".into(), usage: None })
        }
    }

    #[test]
    fn limiter_caps_concurrency() {
        let limited = Arc::new(LimitedProvider::new(
            Slow { active: AtomicUsize::new(0), peak: AtomicUsize::new(0) },
            2,
        ));
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let l = Arc::clone(&limited);
                std::thread::spawn(move || l.send(&qa_request("q"), Duration::from_secs(5)).unwrap())
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(limited.inner.peak.load(Ordering::SeqCst) <= 2);
    }
}
