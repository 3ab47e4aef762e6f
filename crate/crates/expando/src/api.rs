//! Wire-level error model. Every failure the service or CLI reports carries
//! one code from [`ErrorCode`], an HTTP status and a CLI exit code.

use expando_core::embed::EmbedError;
use expando_core::engine::EngineError;
use expando_core::index::IndexError;
use expando_core::ingest::IngestError;
use expando_core::llm::ProviderError;
use expando_core::tree::TreeError;
use serde::{Deserialize, Serialize};

use crate::app::AppError;
use crate::providers::ParserError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    InvalidAnchor,
    NoAnswer,
    ProviderUnavailable,
    ValidationFailed,
    DepthExceeded,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 6] = [
        ErrorCode::NotFound,
        ErrorCode::InvalidAnchor,
        ErrorCode::NoAnswer,
        ErrorCode::ProviderUnavailable,
        ErrorCode::ValidationFailed,
        ErrorCode::DepthExceeded,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::NotFound => "not_found",
            ErrorCode::InvalidAnchor => "invalid_anchor",
            ErrorCode::NoAnswer => "no_answer",
            ErrorCode::ProviderUnavailable => "provider_unavailable",
            ErrorCode::ValidationFailed => "validation_failed",
            ErrorCode::DepthExceeded => "depth_exceeded",
        }
    }

    /// Process exit status for the CLI. 0 is success, 1 is an internal error
    /// and command-line usage errors share 2 with `validation_failed`.
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCode::ValidationFailed => 2,
            ErrorCode::NotFound => 3,
            ErrorCode::InvalidAnchor => 4,
            ErrorCode::NoAnswer => 5,
            ErrorCode::ProviderUnavailable => 6,
            ErrorCode::DepthExceeded => 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
    pub retryable: bool,
    #[serde(skip)]
    pub status: u16,
    /// Storage or other local failures; the CLI exits 1 for these.
    #[serde(skip)]
    pub internal: bool,
}

impl ApiError {
    pub fn new(code: ErrorCode, status: u16, message: impl Into<String>, retryable: bool) -> Self {
        ApiError { code, message: message.into(), retryable, status, internal: false }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::ValidationFailed, 400, message, false)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::NotFound, 404, message, false)
    }

    pub fn exit_code(&self) -> i32 {
        if self.internal {
            1
        } else {
            self.code.exit_code()
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.message)
    }
}

fn provider(e: &ProviderError) -> ApiError {
    let retryable = e.is_transport();
    ApiError::new(ErrorCode::ProviderUnavailable, if retryable { 503 } else { 502 }, e.to_string(), retryable)
}

fn embedding(e: &EmbedError) -> ApiError {
    let retryable = matches!(e, EmbedError::Provider(_) | EmbedError::Timeout);
    ApiError::new(ErrorCode::ProviderUnavailable, if retryable { 503 } else { 502 }, e.to_string(), retryable)
}

fn index(e: &IndexError) -> ApiError {
    match e {
        IndexError::UnknownPaper(_) => ApiError::not_found(e.to_string()),
        IndexError::ZeroK => ApiError::validation(e.to_string()),
        // The embedder produced vectors the index cannot hold.
        IndexError::DimensionMismatch { .. } | IndexError::GranularityMismatch { .. } => {
            ApiError::new(ErrorCode::ProviderUnavailable, 502, e.to_string(), false)
        }
    }
}

fn tree(e: &TreeError) -> ApiError {
    let msg = e.to_string();
    match e {
        TreeError::UnknownNode(_) => ApiError::not_found(msg),
        TreeError::InvalidAnchor(_) => ApiError::new(ErrorCode::InvalidAnchor, 422, msg, false),
        TreeError::DepthExceeded { .. } => ApiError::new(ErrorCode::DepthExceeded, 429, msg, false),
        TreeError::RootImmutable => ApiError::new(ErrorCode::ValidationFailed, 409, msg, false),
    }
}

impl From<&EngineError> for ApiError {
    fn from(e: &EngineError) -> Self {
        let msg = e.to_string();
        match e {
            EngineError::Provider(p) => provider(p),
            EngineError::Embedding(x) => embedding(x),
            EngineError::Index(x) => index(x),
            EngineError::Tree(t) => tree(t),
            EngineError::Prompt(_) => {
                ApiError { internal: true, ..ApiError::new(ErrorCode::ValidationFailed, 500, msg, false) }
            }
            EngineError::UnknownPaper(_) => ApiError::not_found(msg),
            EngineError::EmptyParagraphIndex(_) => ApiError::new(ErrorCode::ValidationFailed, 409, msg, false),
            EngineError::QuestionUnavailable(_) | EngineError::EmptyQuestion => ApiError::validation(msg),
        }
    }
}

impl From<&IngestError> for ApiError {
    fn from(e: &IngestError) -> Self {
        match e {
            IngestError::InvalidParserOutput(_) | IngestError::InvalidDocument(_) | IngestError::InvalidConfig(_) => {
                ApiError::validation(e.to_string())
            }
            IngestError::Embedding(x) => embedding(x),
            IngestError::Index(x) => index(x),
        }
    }
}

impl From<&AppError> for ApiError {
    fn from(e: &AppError) -> Self {
        match e {
            AppError::NotFound(m) => ApiError::not_found(m.clone()),
            AppError::Validation(m) => ApiError::validation(m.clone()),
            AppError::Conflict { message, retryable } => {
                ApiError::new(ErrorCode::ValidationFailed, 409, message.clone(), *retryable)
            }
            AppError::Engine(x) => x.into(),
            AppError::Ingest(x) => x.into(),
            AppError::Parser(ParserError::Unavailable(m)) => {
                ApiError::new(ErrorCode::ProviderUnavailable, 503, format!("parser unavailable: {m}"), true)
            }
            AppError::Parser(ParserError::Rejected(m)) => ApiError::validation(format!("parser rejected the file: {m}")),
            AppError::Store(_) | AppError::Fixture(_) => ApiError {
                internal: true,
                ..ApiError::new(ErrorCode::ProviderUnavailable, 500, e.to_string(), true)
            },
        }
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        (&e).into()
    }
}
