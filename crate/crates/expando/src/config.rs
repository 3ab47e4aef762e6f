//! Configuration: one TOML file plus `EXPANDO_*` environment overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use expando_core::engine::{EngineConfig, PaletteVariant, StaticQuestions};
use expando_core::ingest::IngestionConfig;
use expando_core::llm::GenerationParams;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub data_dir: PathBuf,
    pub ingestion: IngestionConfig,
    pub embedding: EmbeddingSettings,
    pub chat: ChatSettings,
    pub parser: ParserSettings,
    pub engine: EngineSettings,
    pub service: ServiceSettings,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingProviderKind {
    /// The built-in offline hashing encoder.
    Hashing,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub provider: EmbeddingProviderKind,
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatSettings {
    pub endpoint: Option<String>,
    pub api_key_env: Option<String>,
    pub answerer_model: String,
    pub extractor_model: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub max_concurrent: usize,
    /// Canned-response fixture; when set, no network provider is used.
    pub mock_fixture: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParserSettings {
    pub endpoint: Option<String>,
    pub timeout_ms: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    Base,
    Refined,
}

impl Palette {
    pub fn variant(self) -> PaletteVariant {
        match self {
            Palette::Base => PaletteVariant::BASE,
            Palette::Refined => PaletteVariant::REFINED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSettings {
    pub top_k: usize,
    pub max_depth: usize,
    pub palette: Palette,
    pub questions: StaticQuestions,
    pub response_length: String,
    pub answerer_context_tokens: usize,
    pub anchor_word_cap: usize,
    /// 0 disables expiry.
    pub cache_ttl_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub bind: String,
    pub ingest_workers: usize,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings {
            provider: EmbeddingProviderKind::Hashing,
            endpoint: None,
            api_key_env: None,
            timeout_ms: 30_000,
        }
    }
}

impl Default for ChatSettings {
    fn default() -> Self {
        ChatSettings {
            endpoint: None,
            api_key_env: Some("EXPANDO_CHAT_API_KEY".into()),
            answerer_model: "gpt-3.5-turbo-1106".into(),
            extractor_model: "gpt-4-1106-preview".into(),
            timeout_ms: 60_000,
            retries: 2,
            max_concurrent: 4,
            mock_fixture: None,
        }
    }
}

impl Default for EngineSettings {
    fn default() -> Self {
        let base = EngineConfig::new(GenerationParams::new(""), GenerationParams::new(""));
        EngineSettings {
            top_k: base.top_k,
            max_depth: base.max_depth,
            palette: Palette::Base,
            questions: base.questions,
            response_length: base.response_length,
            answerer_context_tokens: base.answerer_context_tokens,
            anchor_word_cap: base.anchor_word_cap,
            cache_ttl_secs: base.cache_ttl_ms.map_or(0, |ms| ms / 1000),
        }
    }
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings { bind: "127.0.0.1:8080".into(), ingest_workers: 2 }
    }
}

impl Default for Config {
    fn default() -> Self {
        Config {
            data_dir: PathBuf::from("expando-data"),
            ingestion: IngestionConfig::default(),
            embedding: EmbeddingSettings::default(),
            chat: ChatSettings::default(),
            parser: ParserSettings::default(),
            engine: EngineSettings::default(),
            service: ServiceSettings::default(),
        }
    }
}

#[derive(Debug)]
pub enum ConfigError {
    Io(PathBuf, std::io::Error),
    Parse(String),
    Env { var: &'static str, value: String },
    Invalid(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Io(path, e) => write!(f, "cannot read {}: {e}", path.display()),
            ConfigError::Parse(msg) => write!(f, "invalid config file: {msg}"),
            ConfigError::Env { var, value } => write!(f, "invalid value '{value}' for {var}"),
            ConfigError::Invalid(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn parse_env<T: std::str::FromStr>(var: &'static str, value: String) -> Result<T, ConfigError> {
    value.parse().map_err(|_| ConfigError::Env { var, value })
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads `path` (defaults when `None`), then applies the process
    /// environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io(p.to_path_buf(), e))?;
                Self::from_toml(&text)?
            }
            None => Config::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `EXPANDO_*` overrides from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup("EXPANDO_DATA_DIR") {
            self.data_dir = v.into();
        }
        if let Some(v) = lookup("EXPANDO_CHAT_ENDPOINT") {
            self.chat.endpoint = Some(v);
        }
        if let Some(v) = lookup("EXPANDO_ANSWERER_MODEL") {
            self.chat.answerer_model = v;
        }
        if let Some(v) = lookup("EXPANDO_EXTRACTOR_MODEL") {
            self.chat.extractor_model = v;
        }
        if let Some(v) = lookup("EXPANDO_MOCK_FIXTURE") {
            self.chat.mock_fixture = Some(v.into());
        }
        if let Some(v) = lookup("EXPANDO_EMBEDDING_ENDPOINT") {
            self.embedding.endpoint = Some(v);
            self.embedding.provider = EmbeddingProviderKind::Http;
        }
        if let Some(v) = lookup("EXPANDO_PARSER_ENDPOINT") {
            self.parser.endpoint = Some(v);
        }
        if let Some(v) = lookup("EXPANDO_PALETTE") {
            self.engine.palette = match v.as_str() {
                "base" => Palette::Base,
                "refined" => Palette::Refined,
                _ => return Err(ConfigError::Env { var: "EXPANDO_PALETTE", value: v }),
            };
        }
        if let Some(v) = lookup("EXPANDO_MAX_DEPTH") {
            self.engine.max_depth = parse_env("EXPANDO_MAX_DEPTH", v)?;
        }
        if let Some(v) = lookup("EXPANDO_CACHE_TTL_SECS") {
            self.engine.cache_ttl_secs = parse_env("EXPANDO_CACHE_TTL_SECS", v)?;
        }
        if let Some(v) = lookup("EXPANDO_CHUNK_SIZE") {
            self.ingestion.chunk_size = parse_env("EXPANDO_CHUNK_SIZE", v)?;
        }
        if let Some(v) = lookup("EXPANDO_CHUNK_OVERLAP") {
            self.ingestion.chunk_overlap = parse_env("EXPANDO_CHUNK_OVERLAP", v)?;
        }
        if let Some(v) = lookup("EXPANDO_BIND") {
            self.service.bind = v;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !self.ingestion.chunking().is_valid() || self.ingestion.chunk_size == 0 {
            return Err(ConfigError::Invalid("need 0 <= chunk_overlap < chunk_size".into()));
        }
        if self.ingestion.embedding_dim == 0 || self.ingestion.batch_size == 0 {
            return Err(ConfigError::Invalid("embedding_dim and batch_size must be positive".into()));
        }
        if self.engine.top_k == 0 || self.engine.max_depth == 0 {
            return Err(ConfigError::Invalid("top_k and max_depth must be positive".into()));
        }
        if self.embedding.provider == EmbeddingProviderKind::Http && self.embedding.endpoint.is_none() {
            return Err(ConfigError::Invalid("http embedding provider needs an endpoint".into()));
        }
        Ok(())
    }

    fn params(&self, model: &str) -> GenerationParams {
        GenerationParams {
            timeout: Duration::from_millis(self.chat.timeout_ms),
            retries: self.chat.retries,
            ..GenerationParams::new(model)
        }
    }

    pub fn engine_config(&self) -> EngineConfig {
        let e = &self.engine;
        EngineConfig {
            top_k: e.top_k,
            max_depth: e.max_depth,
            palette: e.palette.variant(),
            questions: e.questions.clone(),
            response_length: e.response_length.clone(),
            answerer_context_tokens: e.answerer_context_tokens,
            anchor_word_cap: e.anchor_word_cap,
            cache_ttl_ms: (e.cache_ttl_secs > 0).then(|| e.cache_ttl_secs * 1000),
            ..EngineConfig::new(self.params(&self.chat.answerer_model), self.params(&self.chat.extractor_model))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn defaults_match_generation_contract() {
        let e = Config::default().engine_config();
        assert_eq!(e.answerer.temperature, 0.0);
        assert_eq!(e.answerer.max_output_tokens, 750);
        assert_eq!(e.top_k, 12);
        assert_eq!(e.max_depth, 8);
        assert_eq!(e.palette, PaletteVariant::BASE);
        assert_eq!(e.cache_ttl_ms, Some(86_400_000));
    }

    #[test]
    fn toml_sections_override_defaults() {
        let cfg = Config::from_toml(
            "data_dir = \"/tmp/x\"\n[engine]\npalette = \"refined\"\nmax_depth = 5\n[ingestion]\nchunk_size = 4\nchunk_overlap = 1\n",
        )
        .unwrap();
        assert_eq!(cfg.engine.palette, Palette::Refined);
        assert_eq!(cfg.engine_config().max_depth, 5);
        assert_eq!(cfg.ingestion.chunk_size, 4);
        assert!(!cfg.engine_config().palette.why_enabled);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(Config::from_toml("[engine]\ntopk = 3\n").is_err());
    }

    #[test]
    fn environment_overrides() {
        let env: HashMap<&str, &str> =
            [("EXPANDO_PALETTE", "refined"), ("EXPANDO_MAX_DEPTH", "3"), ("EXPANDO_CACHE_TTL_SECS", "0")].into();
        let mut cfg = Config::default();
        cfg.apply_env(|k| env.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.engine.max_depth, 3);
        assert_eq!(cfg.engine_config().cache_ttl_ms, None);
        assert_eq!(cfg.engine.palette, Palette::Refined);

        let bad: HashMap<&str, &str> = [("EXPANDO_MAX_DEPTH", "deep")].into();
        assert!(Config::default().apply_env(|k| bad.get(k).map(|v| v.to_string())).is_err());
    }

    #[test]
    fn invalid_chunking_is_rejected() {
        let mut cfg = Config::default();
        cfg.ingestion.chunk_overlap = 3;
        assert!(cfg.validate().is_err());
    }
}
