//! Chat-completion contract, generation parameters and the retrying
//! `complete` call.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::time::Duration;
use serde::{Deserialize, Serialize};

use crate::prompt::RenderedPrompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// Wire request: `{model_id, messages, temperature, max_tokens}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

/// Wire response: `{text}` plus optional usage counters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProviderError {
    /// Transport failure, or retries exhausted on transport failures.
    Unreachable { attempts: u32, detail: String },
    /// The provider answered but declined the request. Never retried.
    Refusal(String),
    /// Every attempt timed out.
    Timeout { attempts: u32 },
}

impl ProviderError {
    pub fn is_transport(&self) -> bool {
        matches!(self, ProviderError::Unreachable { .. } | ProviderError::Timeout { .. })
    }
}

impl core::fmt::Display for ProviderError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ProviderError::Unreachable { attempts, detail } => {
                write!(f, "provider unreachable after {attempts} attempt(s): {detail}")
            }
            ProviderError::Refusal(msg) => write!(f, "provider refused the request: {msg}"),
            ProviderError::Timeout { attempts } => {
                write!(f, "provider timed out on all {attempts} attempt(s)")
            }
        }
    }
}

/// One request/response exchange with a chat-completion provider.
pub trait ChatProvider: Send + Sync {
    fn send(&self, request: &ChatRequest, timeout: Duration) -> Result<ChatResponse, ProviderError>;
}

/// Time source and sleeper. The std crate supplies a wall-clock one.
pub trait Runtime: Send + Sync {
    fn now_ms(&self) -> u64;
    fn sleep(&self, duration: Duration);
}

/// Clock stuck at zero that never sleeps; keeps tests instant.
#[derive(Debug, Clone, Copy, Default)]
pub struct NullRuntime;

impl Runtime for NullRuntime {
    fn now_ms(&self) -> u64 {
        0
    }

    fn sleep(&self, _duration: Duration) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    #[serde(with = "duration_ms")]
    pub timeout: Duration,
    pub retries: u32,
}

impl GenerationParams {
    /// Temperature 0 and a 750-token output cap.
    pub fn new(model_id: impl Into<String>) -> Self {
        GenerationParams {
            model_id: model_id.into(),
            temperature: 0.0,
            max_output_tokens: 750,
            timeout: Duration::from_secs(60),
            retries: 2,
        }
    }
}

mod duration_ms {
    use core::time::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmResult {
    /// Provider text exactly as received.
    pub raw_text: String,
    pub token_usage: Option<TokenUsage>,
    pub latency_ms: u64,
    pub attempts: u32,
}

pub fn to_request(prompt: &RenderedPrompt, params: &GenerationParams) -> ChatRequest {
    ChatRequest {
        model_id: params.model_id.clone(),
        messages: vec![
            Message { role: Role::System, content: prompt.system_text.clone() },
            Message { role: Role::User, content: prompt.user_text.clone() },
        ],
        temperature: params.temperature,
        max_tokens: params.max_output_tokens,
    }
}

/// Delay before retry number `retry` (1-based): 250 ms doubling, capped at 4 s.
pub fn backoff(retry: u32) -> Duration {
    Duration::from_millis(250u64 << (retry.saturating_sub(1)).min(4))
}

/// Sends the prompt, retrying transport failures up to `params.retries`
/// times. Refusals return immediately. When retries run out the error is
/// `Timeout` if every attempt timed out and `Unreachable` otherwise.
pub fn complete(
    provider: &dyn ChatProvider,
    prompt: &RenderedPrompt,
    params: &GenerationParams,
    runtime: &dyn Runtime,
) -> Result<LlmResult, ProviderError> {
    let request = to_request(prompt, params);
    let started = runtime.now_ms();
    let max_attempts = params.retries.saturating_add(1);
    let mut all_timeouts = true;
    let mut last_detail = String::new();
    for attempt in 1..=max_attempts {
        if attempt > 1 {
            runtime.sleep(backoff(attempt - 1));
        }
        match provider.send(&request, params.timeout) {
            Ok(resp) => {
                return Ok(LlmResult {
                    raw_text: resp.text,
                    token_usage: resp.usage,
                    latency_ms: runtime.now_ms().saturating_sub(started),
                    attempts: attempt,
                })
            }
            Err(ProviderError::Refusal(msg)) => return Err(ProviderError::Refusal(msg)),
            Err(ProviderError::Timeout { .. }) => last_detail = "timed out".to_string(),
            Err(ProviderError::Unreachable { detail, .. }) => {
                all_timeouts = false;
                last_detail = detail;
            }
        }
    }
    if all_timeouts {
        Err(ProviderError::Timeout { attempts: max_attempts })
    } else {
        Err(ProviderError::Unreachable { attempts: max_attempts, detail: last_detail })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::TemplateName;
    use core::sync::atomic::{AtomicU32, Ordering};

    struct Scripted {
        failures: Vec<ProviderError>,
        calls: AtomicU32,
    }

    impl ChatProvider for Scripted {
        fn send(&self, request: &ChatRequest, _timeout: Duration) -> Result<ChatResponse, ProviderError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst) as usize;
            assert_eq!(request.temperature, 0.0);
            assert_eq!(request.max_tokens, 750);
            match self.failures.get(n) {
                Some(e) => Err(e.clone()),
                None => Ok(ChatResponse { text: "  fixed text \n".into(), usage: None }),
            }
        }
    }

    fn prompt() -> RenderedPrompt {
        RenderedPrompt {
            template: TemplateName::QuestionAnswering,
            system_text: "sys".into(),
            user_text: "user".into(),
        }
    }

    fn params(retries: u32) -> GenerationParams {
        GenerationParams { retries, ..GenerationParams::new("m") }
    }

    #[test]
    fn passes_text_through_verbatim() {
        let p = Scripted { failures: vec![], calls: AtomicU32::new(0) };
        let r = complete(&p, &prompt(), &params(0), &NullRuntime).unwrap();
        assert_eq!(r.raw_text, "  fixed text \n");
        assert_eq!(r.attempts, 1);
    }

    #[test]
    fn two_timeouts_then_success() {
        let t = ProviderError::Timeout { attempts: 1 };
        let p = Scripted { failures: vec![t.clone(), t], calls: AtomicU32::new(0) };
        let r = complete(&p, &prompt(), &params(3), &NullRuntime).unwrap();
        assert_eq!(r.attempts, 3);
    }

    #[test]
    fn exhaustion_is_unreachable() {
        let u = ProviderError::Unreachable { attempts: 1, detail: "connection refused".into() };
        let p = Scripted { failures: vec![u.clone(), u.clone(), u], calls: AtomicU32::new(0) };
        assert_eq!(
            complete(&p, &prompt(), &params(2), &NullRuntime),
            Err(ProviderError::Unreachable { attempts: 3, detail: "connection refused".into() })
        );
    }

    #[test]
    fn all_timeouts_surface_as_timeout() {
        let t = ProviderError::Timeout { attempts: 1 };
        let p = Scripted { failures: vec![t.clone(), t], calls: AtomicU32::new(0) };
        assert_eq!(complete(&p, &prompt(), &params(1), &NullRuntime), Err(ProviderError::Timeout { attempts: 2 }));
    }

    #[test]
    fn refusal_is_not_retried() {
        let p = Scripted { failures: vec![ProviderError::Refusal("policy".into())], calls: AtomicU32::new(0) };
        assert_eq!(
            complete(&p, &prompt(), &params(5), &NullRuntime),
            Err(ProviderError::Refusal("policy".into()))
        );
        assert_eq!(p.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn backoff_doubles_then_caps() {
        assert_eq!(backoff(1), Duration::from_millis(250));
        assert_eq!(backoff(2), Duration::from_millis(500));
        assert_eq!(backoff(9), Duration::from_millis(4000));
    }
}
