//! HTTP provider speaking a generic JSON chat-completions-style schema.
//!
//! Credentials are read only from the configured env var and never placed
//! in errors or logs. Retries are bounded by the configured maximum with
//! non-decreasing backoff delays.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use super::{Embedder, GatewayError, Generation, ProviderConfig, TextGenerator, Usage};

/// Caps in-flight HTTP requests across concurrent callers.
pub struct ConcurrencyLimiter {
    max: usize,
    in_flight: Mutex<usize>,
    cv: Condvar,
}

impl ConcurrencyLimiter {
    pub fn new(max: usize) -> Arc<ConcurrencyLimiter> {
        Arc::new(ConcurrencyLimiter { max: max.max(1), in_flight: Mutex::new(0), cv: Condvar::new() })
    }

    fn acquire(self: &Arc<Self>) -> LimiterGuard {
        let mut n = self.in_flight.lock().unwrap();
        while *n >= self.max {
            n = self.cv.wait(n).unwrap();
        }
        *n += 1;
        LimiterGuard { limiter: Arc::clone(self) }
    }
}

struct LimiterGuard {
    limiter: Arc<ConcurrencyLimiter>,
}

impl Drop for LimiterGuard {
    fn drop(&mut self) {
        let mut n = self.limiter.in_flight.lock().unwrap();
        *n -= 1;
        self.limiter.cv.notify_one();
    }
}

pub struct HttpProvider {
    config: ProviderConfig,
    endpoint: String,
    agent: ureq::Agent,
    limiter: Arc<ConcurrencyLimiter>,
    embedding_dim: usize,
}

impl HttpProvider {
    pub fn new(
        config: ProviderConfig,
        limiter: Arc<ConcurrencyLimiter>,
        embedding_dim: usize,
    ) -> Result<HttpProvider, GatewayError> {
        let endpoint = config
            .endpoint
            .clone()
            .ok_or_else(|| GatewayError::InvalidConfig("http provider requires endpoint".into()))?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build();
        Ok(HttpProvider { config, endpoint, agent, limiter, embedding_dim })
    }

    fn credential(&self) -> Result<String, GatewayError> {
        std::env::var(&self.config.auth_env)
            .map_err(|_| GatewayError::MissingCredential(self.config.auth_env.clone()))
    }

    fn post_with_retry(&self, body: serde_json::Value) -> Result<serde_json::Value, GatewayError> {
        let credential = self.credential()?;
        let _slot = self.limiter.acquire();
        let max_attempts = self.config.retry_max.max(1);
        let mut last_error = String::new();
        for attempt in 1..=max_attempts {
            if attempt > 1 {
                // non-decreasing backoff: base * (attempt - 1)
                let delay = self.config.backoff_ms.saturating_mul((attempt - 1) as u64);
                std::thread::sleep(Duration::from_millis(delay));
            }
            let result = self
                .agent
                .post(&self.endpoint)
                .set("authorization", &format!("Bearer {credential}"))
                .set("content-type", "application/json")
                .send_json(body.clone());
            match result {
                Ok(resp) => {
                    return resp.into_json().map_err(|e| GatewayError::Provider {
                        attempts: attempt,
                        message: format!("invalid response body: {e}"),
                    })
                }
                Err(e) => {
                    // ureq errors format the URL, never request headers
                    last_error = e.to_string();
                }
            }
        }
        Err(GatewayError::Provider { attempts: max_attempts, message: last_error })
    }
}

impl TextGenerator for HttpProvider {
    fn generate(&self, _template_id: &str, prompt: &str) -> Result<Generation, GatewayError> {
        let body = serde_json::json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": self.config.max_tokens,
            "temperature": self.config.temperature,
        });
        let resp = self.post_with_retry(body)?;
        let text = resp["choices"][0]["message"]["content"]
            .as_str()
            .filter(|t| !t.is_empty())
            .ok_or_else(|| GatewayError::Provider {
                attempts: 1,
                message: "response carried no completion text".into(),
            })?
            .to_string();
        Ok(Generation {
            text,
            usage: Usage {
                prompt_tokens: resp["usage"]["prompt_tokens"].as_u64(),
                completion_tokens: resp["usage"]["completion_tokens"].as_u64(),
                attempts: 1,
            },
        })
    }
}

impl Embedder for HttpProvider {
    fn dim(&self) -> usize {
        self.embedding_dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        let body = serde_json::json!({
            "model": self.config.model_name,
            "input": texts,
        });
        let resp = self.post_with_retry(body)?;
        let data = resp["data"].as_array().ok_or_else(|| GatewayError::Provider {
            attempts: 1,
            message: "embedding response carried no data array".into(),
        })?;
        if data.len() != texts.len() {
            return Err(GatewayError::Provider {
                attempts: 1,
                message: format!("expected {} embeddings, got {}", texts.len(), data.len()),
            });
        }
        let mut out = Vec::with_capacity(data.len());
        for entry in data {
            let raw: Vec<f32> = entry["embedding"]
                .as_array()
                .map(|a| a.iter().filter_map(|v| v.as_f64()).map(|v| v as f32).collect())
                .unwrap_or_default();
            if raw.len() != self.embedding_dim {
                return Err(GatewayError::Provider {
                    attempts: 1,
                    message: format!(
                        "embedding dimension {} does not match configured {}",
                        raw.len(),
                        self.embedding_dim
                    ),
                });
            }
            let norm: f32 = raw.iter().map(|x| x * x).sum::<f32>().sqrt();
            if norm == 0.0 {
                return Err(GatewayError::Provider {
                    attempts: 1,
                    message: "zero-norm embedding".into(),
                });
            }
            out.push(raw.into_iter().map(|x| x / norm).collect());
        }
        Ok(out)
    }
}
