//! Uniform abstraction over text-generation and embedding providers.
//!
//! The deterministic stub provider lets the entire pipeline run and test
//! offline; the http provider speaks a generic chat-completions-style
//! JSON schema. Temperature defaults to 0 for all pipeline calls.

mod http;
mod stub;
pub mod templates;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{ConcurrencyLimiter, HttpProvider};
pub use stub::{StubProvider, STUB_EMBEDDING_DIM};
pub use templates::{Template, TEMPLATES};

/// Default env var holding the provider credential.
pub const DEFAULT_AUTH_ENV: &str = "SPARK_PROVIDER_API_KEY";

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("unknown template: {0}")]
    UnknownTemplate(String),
    #[error("template {template} is missing variable for placeholder {placeholder}")]
    MissingVariable { template: String, placeholder: String },
    #[error("credential env var {0} is not set")]
    MissingCredential(String),
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("provider failed after {attempts} attempt(s): {message}")]
    Provider { attempts: u32, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    #[default]
    Stub,
    Http,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    /// Name of the env var holding the credential, never the credential.
    pub auth_env: String,
    pub timeout_ms: u64,
    pub retry_max: u32,
    pub backoff_ms: u64,
    pub max_tokens: u32,
    pub temperature: f32,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Stub,
            endpoint: None,
            model_name: "stub".into(),
            auth_env: DEFAULT_AUTH_ENV.into(),
            timeout_ms: 30_000,
            retry_max: 3,
            backoff_ms: 250,
            max_tokens: 1024,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub template_id: String,
    pub variables: BTreeMap<String, String>,
    pub max_tokens: u32,
    pub temperature: f32,
}

impl GenerationRequest {
    pub fn new(template_id: &str, variables: BTreeMap<String, String>) -> GenerationRequest {
        GenerationRequest {
            template_id: template_id.into(),
            variables,
            max_tokens: 1024,
            temperature: 0.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    pub usage: Usage,
}

pub trait TextGenerator: Send + Sync {
    fn generate(&self, template_id: &str, prompt: &str) -> Result<Generation, GatewayError>;
}

pub trait Embedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError>;
}

/// Front door for all provider calls: renders bundled templates, then
/// delegates to the configured generator/embedder.
pub struct Gateway {
    generator: Arc<dyn TextGenerator>,
    embedder: Arc<dyn Embedder>,
}

impl Gateway {
    pub fn new(generator: Arc<dyn TextGenerator>, embedder: Arc<dyn Embedder>) -> Gateway {
        Gateway { generator, embedder }
    }

    /// Fully offline gateway backed by the deterministic stub.
    pub fn stub() -> Gateway {
        let stub = Arc::new(StubProvider::new());
        Gateway { generator: stub.clone(), embedder: stub }
    }

    pub fn from_config(
        generation: &ProviderConfig,
        embedding: &ProviderConfig,
        embedding_dim: usize,
        max_in_flight: usize,
    ) -> Result<Gateway, GatewayError> {
        let limiter = ConcurrencyLimiter::new(max_in_flight);
        let generator: Arc<dyn TextGenerator> = match generation.kind {
            ProviderKind::Stub => Arc::new(StubProvider::new()),
            ProviderKind::Http => {
                Arc::new(HttpProvider::new(generation.clone(), limiter.clone(), embedding_dim)?)
            }
        };
        let embedder: Arc<dyn Embedder> = match embedding.kind {
            ProviderKind::Stub => Arc::new(StubProvider::new()),
            ProviderKind::Http => {
                Arc::new(HttpProvider::new(embedding.clone(), limiter, embedding_dim)?)
            }
        };
        Ok(Gateway { generator, embedder })
    }

    pub fn render_template(
        &self,
        template_id: &str,
        variables: &BTreeMap<String, String>,
    ) -> Result<String, GatewayError> {
        templates::render(template_id, variables)
    }

    pub fn generate(&self, req: &GenerationRequest) -> Result<Generation, GatewayError> {
        if req.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        let prompt = templates::render(&req.template_id, &req.variables)?;
        let generation = self.generator.generate(&req.template_id, &prompt)?;
        if generation.text.is_empty() {
            return Err(GatewayError::Provider {
                attempts: generation.usage.attempts,
                message: "provider returned empty text".into(),
            });
        }
        Ok(generation)
    }

    pub fn embedding_dim(&self) -> usize {
        self.embedder.dim()
    }

    pub fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest("embed requires at least one text".into()));
        }
        let out = self.embedder.embed(texts)?;
        if out.len() != texts.len() {
            return Err(GatewayError::Provider {
                attempts: 1,
                message: format!("expected {} embeddings, got {}", texts.len(), out.len()),
            });
        }
        Ok(out)
    }
}
