//! Deterministic offline provider.
//!
//! Generation is a pure function of the rendered prompt with
//! template-aware output shapes, so the full pipeline produces structured,
//! parseable results without a live model. The embedder feature-hashes
//! token counts into a fixed-dimension unit vector, so similar texts get
//! similar vectors.

use sha2::{Digest, Sha256};

use super::{Embedder, GatewayError, Generation, TextGenerator, Usage};
use crate::tokenize::tokenize;

pub const STUB_EMBEDDING_DIM: usize = 64;

#[derive(Debug, Clone)]
pub struct StubProvider {
    dim: usize,
}

impl Default for StubProvider {
    fn default() -> Self {
        StubProvider { dim: STUB_EMBEDDING_DIM }
    }
}

impl StubProvider {
    pub fn new() -> Self {
        Self::default()
    }
}

fn prompt_hash(prompt: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(prompt.as_bytes());
    hex::encode(&hasher.finalize()[..8])
}

/// Text between `<BEGIN_{tag}>` and `<END_{tag}>` markers, trimmed.
fn block<'a>(prompt: &'a str, tag: &str) -> Option<&'a str> {
    let begin = format!("<BEGIN_{tag}>");
    let end = format!("<END_{tag}>");
    let start = prompt.find(&begin)? + begin.len();
    let len = prompt[start..].find(&end)?;
    Some(prompt[start..start + len].trim())
}

fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn classify_task_kind(problem: &str) -> &'static str {
    let lower = problem.to_lowercase();
    if ["error", "exception", "fails", "traceback", "fix", "bug"]
        .iter()
        .any(|kw| lower.contains(kw))
    {
        "debugging"
    } else if lower.contains("refactor") || lower.contains("clean up") {
        "refactoring"
    } else if tokenize(problem).iter().any(|t| t.contains('_')) {
        "api_usage"
    } else if ["how", "what", "why", "explain"].iter().any(|kw| lower.contains(kw)) {
        "conceptual"
    } else {
        "other"
    }
}

fn normalized_query(problem: &str) -> String {
    let tokens = tokenize(problem);
    let take = tokens.len().min(32);
    tokens[..take].join(" ")
}

impl TextGenerator for StubProvider {
    fn generate(&self, template_id: &str, prompt: &str) -> Result<Generation, GatewayError> {
        let text = match template_id {
            "intent" => {
                let problem = block(prompt, "PROBLEM").unwrap_or("");
                serde_json::json!({
                    "task_kind": classify_task_kind(problem),
                    "normalized_query": normalized_query(problem),
                })
                .to_string()
            }
            "insight_extraction" => {
                let trace_id = block(prompt, "TRACE_ID").unwrap_or("");
                let hindsight = block(prompt, "HINDSIGHT").unwrap_or("");
                let lesson = collapse_ws(hindsight);
                serde_json::json!({
                    "lesson": lesson,
                    "trace_ids": [trace_id],
                })
                .to_string()
            }
            "insight_consolidation" => {
                let lessons = block(prompt, "LESSONS").unwrap_or("");
                let mut parts: Vec<String> = lessons
                    .lines()
                    .map(collapse_ws)
                    .filter(|l| !l.is_empty())
                    .collect();
                parts.dedup();
                parts.join(" ")
            }
            "synthesis" => {
                let problem = block(prompt, "PROBLEM").unwrap_or("");
                let documentation = block(prompt, "DOCUMENTATION").unwrap_or("");
                let insights = block(prompt, "INSIGHTS").unwrap_or("");
                let mut out = String::new();
                out.push_str(&format!("Guidance for: {}\n", collapse_ws(problem)));
                if !documentation.is_empty() {
                    out.push_str("Relevant documentation:\n");
                    out.push_str(documentation);
                    out.push('\n');
                }
                if !insights.is_empty() {
                    out.push_str("Lessons from experience:\n");
                    out.push_str(insights);
                    out.push('\n');
                }
                out.push_str(&format!("ref:{}", prompt_hash(prompt)));
                out
            }
            "synthetic_feedback" => {
                let solution = block(prompt, "REFERENCE_SOLUTION").unwrap_or("");
                let mut hint = collapse_ws(solution);
                hint.truncate(200);
                format!("Guide the agent towards the accepted approach: {hint}")
            }
            _ => format!("stub:{template_id}:{}", prompt_hash(prompt)),
        };
        Ok(Generation {
            text,
            usage: Usage {
                prompt_tokens: Some((prompt.len() / 4) as u64),
                completion_tokens: None,
                attempts: 1,
            },
        })
    }
}

impl Embedder for StubProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    /// Feature-hash token counts into a unit vector. Each token maps to a
    /// signed bucket derived from its SHA-256; empty texts embed to the
    /// first basis vector.
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>, GatewayError> {
        Ok(texts.iter().map(|t| self.embed_one(t)).collect())
    }
}

impl StubProvider {
    fn embed_one(&self, text: &str) -> Vec<f32> {
        let mut v = vec![0.0f32; self.dim];
        let tokens = tokenize(text);
        if tokens.is_empty() {
            v[0] = 1.0;
            return v;
        }
        for token in &tokens {
            let digest = Sha256::digest(token.as_bytes());
            let bucket = u64::from_le_bytes(digest[..8].try_into().unwrap()) as usize % self.dim;
            let sign = if digest[8] & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm: f32 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
        if norm == 0.0 {
            // cancellation is possible with signed buckets
            v[0] = 1.0;
            return v;
        }
        for x in &mut v {
            *x /= norm;
        }
        v
    }
}
