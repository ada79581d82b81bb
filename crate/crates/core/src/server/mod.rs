//! MCP-compatible JSON-RPC tool server over stdio and HTTP.
//!
//! Both transports funnel through [`dispatch`], so result bodies are
//! byte-identical modulo framing.

mod http;
mod stdio;
mod tools;

use std::sync::Arc;

use chrono::Utc;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::Config;
use crate::gateway::{Gateway, GatewayError};
use crate::learning::{FeedbackEvent, LearningError, LearningLoop};
use crate::retrieval::{RetrievalAgent, RetrievalError};
use crate::store::{DocBlobCandidate, Outcome, RejectedBlob, Store, StoreError};

pub use http::{serve_http, HttpHandle};
pub use stdio::serve_stdio;
pub use tools::{validate_against_schema, ToolDescriptor, TOOL_DESCRIPTORS};

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
/// Domain error block -32000..-32099.
pub const INTERNAL_ERROR: i64 = -32000;
pub const NOT_FOUND: i64 = -32004;
pub const VALIDATION_ERROR: i64 = -32010;
pub const PROVIDER_UNAVAILABLE: i64 = -32050;

/// Request body size cap, both transports.
pub const MAX_BODY_BYTES: usize = 1024 * 1024;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("gateway: {0}")]
    Gateway(#[from] GatewayError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Startup(String),
}

/// The wired service: one store, one gateway, the retrieval agent and
/// the learning loop sharing them.
pub struct SparkService {
    store: Arc<Store>,
    gateway: Arc<Gateway>,
    retrieval: RetrievalAgent,
    learning: LearningLoop,
}

impl SparkService {
    pub fn new(config: &Config) -> Result<SparkService, ServiceError> {
        let store = Arc::new(Store::open(&config.store.root)?);
        let gateway = Arc::new(Gateway::from_config(
            &config.gateway.generation,
            &config.gateway.embedding,
            config.gateway.embedding_dim,
            config.gateway.max_in_flight,
        )?);
        Self::with_parts(store, gateway, config)
    }

    pub fn with_parts(
        store: Arc<Store>,
        gateway: Arc<Gateway>,
        config: &Config,
    ) -> Result<SparkService, ServiceError> {
        store.ensure_epoch_zero()?;
        let retrieval =
            RetrievalAgent::new(store.clone(), gateway.clone(), config.retrieval.clone());
        let learning =
            LearningLoop::new(store.clone(), gateway.clone(), config.learning.clone());
        Ok(SparkService { store, gateway, retrieval, learning })
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn retrieval(&self) -> &RetrievalAgent {
        &self.retrieval
    }

    pub fn learning(&self) -> &LearningLoop {
        &self.learning
    }
}

fn rpc_result(id: Value, result: Value) -> Value {
    json!({ "jsonrpc": "2.0", "id": id, "result": result })
}

fn rpc_error(id: Value, code: i64, message: &str) -> Value {
    json!({ "jsonrpc": "2.0", "id": id, "error": { "code": code, "message": message } })
}

/// Response for a body that did not parse as JSON at all.
pub fn parse_error_response() -> Value {
    rpc_error(Value::Null, PARSE_ERROR, "parse error")
}

/// Dispatch one JSON-RPC request value to the tool surface. Always
/// returns a response; protocol violations map to the standard codes.
pub fn dispatch(service: &Arc<SparkService>, request: &Value) -> Value {
    let Some(obj) = request.as_object() else {
        return rpc_error(Value::Null, INVALID_REQUEST, "request must be a JSON object");
    };
    let id = match obj.get("id") {
        None | Some(Value::Null) => Value::Null,
        Some(v @ Value::String(_)) | Some(v @ Value::Number(_)) => v.clone(),
        Some(_) => {
            return rpc_error(Value::Null, INVALID_REQUEST, "id must be a number or string")
        }
    };
    if obj.get("jsonrpc").and_then(Value::as_str) != Some("2.0") {
        return rpc_error(id, INVALID_REQUEST, "jsonrpc must be \"2.0\"");
    }
    let Some(method) = obj.get("method").and_then(Value::as_str) else {
        return rpc_error(id, INVALID_REQUEST, "method must be a string");
    };
    let params = match obj.get("params") {
        None => Value::Object(Default::default()),
        Some(v @ Value::Object(_)) => v.clone(),
        Some(_) => return rpc_error(id, INVALID_PARAMS, "params must be an object"),
    };

    match method {
        "tools/list" => rpc_result(id, json!({ "tools": tools::descriptors() })),
        "get_recommendation" => tool_get_recommendation(service, id, &params),
        "submit_feedback" => tool_submit_feedback(service, id, &params),
        "ingest_documentation" => tool_ingest_documentation(service, id, &params),
        "memory_stats" => tool_memory_stats(service, id),
        _ => rpc_error(id, METHOD_NOT_FOUND, &format!("unknown method {method}")),
    }
}

fn require_string(params: &Value, key: &str) -> Result<String, String> {
    match params.get(key) {
        Some(Value::String(s)) => Ok(s.clone()),
        Some(_) => Err(format!("{key} must be a string")),
        None => Err(format!("missing required param {key}")),
    }
}

fn optional_string(params: &Value, key: &str) -> Result<Option<String>, String> {
    match params.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s.clone())),
        Some(_) => Err(format!("{key} must be a string")),
    }
}

fn gateway_error_code(err: &GatewayError) -> (i64, String) {
    match err {
        GatewayError::Provider { .. } | GatewayError::MissingCredential(_) => {
            (PROVIDER_UNAVAILABLE, format!("upstream provider unavailable: {err}"))
        }
        GatewayError::UnknownTemplate(_) | GatewayError::MissingVariable { .. } => {
            (INTERNAL_ERROR, err.to_string())
        }
        _ => (VALIDATION_ERROR, err.to_string()),
    }
}

fn retrieval_error_code(err: &RetrievalError) -> (i64, String) {
    match err {
        RetrievalError::EmptyProblem => (INVALID_PARAMS, err.to_string()),
        RetrievalError::Intent(g)
        | RetrievalError::Synthesis(g)
        | RetrievalError::Embedding(g) => gateway_error_code(g),
        RetrievalError::MalformedIntent(_) => {
            (PROVIDER_UNAVAILABLE, format!("upstream provider unavailable: {err}"))
        }
        RetrievalError::Execute(_) => (INTERNAL_ERROR, err.to_string()),
        RetrievalError::Store(s) => store_error_code(s),
    }
}

fn store_error_code(err: &StoreError) -> (i64, String) {
    match err {
        StoreError::NotFound(_) => (NOT_FOUND, err.to_string()),
        StoreError::Validation(_) => (VALIDATION_ERROR, err.to_string()),
        StoreError::Conflict(_) => (VALIDATION_ERROR, err.to_string()),
        _ => (INTERNAL_ERROR, err.to_string()),
    }
}

fn tool_get_recommendation(service: &Arc<SparkService>, id: Value, params: &Value) -> Value {
    let problem = match require_string(params, "problem") {
        Ok(p) => p,
        Err(m) => return rpc_error(id, INVALID_PARAMS, &m),
    };
    let code_context = match optional_string(params, "code_context") {
        Ok(c) => c.unwrap_or_default(),
        Err(m) => return rpc_error(id, INVALID_PARAMS, &m),
    };
    match service.retrieval.recommend(&problem, &code_context) {
        Ok(rec) => rpc_result(id, serde_json::to_value(rec).unwrap()),
        Err(e) => {
            let (code, message) = retrieval_error_code(&e);
            rpc_error(id, code, &message)
        }
    }
}

fn parse_outcome(s: &str) -> Option<Outcome> {
    match s {
        "accepted" => Some(Outcome::Accepted),
        "rejected" => Some(Outcome::Rejected),
        "partially_useful" => Some(Outcome::PartiallyUseful),
        "no_recommendation_available" => Some(Outcome::NoRecommendationAvailable),
        _ => None,
    }
}

fn tool_submit_feedback(service: &Arc<SparkService>, id: Value, params: &Value) -> Value {
    let recommendation_id = match require_string(params, "recommendation_id") {
        Ok(v) => v,
        Err(m) => return rpc_error(id, INVALID_PARAMS, &m),
    };
    let outcome_str = match require_string(params, "outcome") {
        Ok(v) => v,
        Err(m) => return rpc_error(id, INVALID_PARAMS, &m),
    };
    let Some(outcome) = parse_outcome(&outcome_str) else {
        return rpc_error(id, INVALID_PARAMS, &format!("unknown outcome {outcome_str}"));
    };
    let hindsight_feedback = match optional_string(params, "hindsight_feedback") {
        Ok(v) => v,
        Err(m) => return rpc_error(id, INVALID_PARAMS, &m),
    };
    let agent_tag = match optional_string(params, "agent_tag") {
        Ok(v) => v.unwrap_or_else(|| "unknown".to_string()),
        Err(m) => return rpc_error(id, INVALID_PARAMS, &m),
    };
    let event = FeedbackEvent {
        recommendation_id,
        outcome,
        hindsight_feedback,
        agent_tag,
        timestamp: Utc::now(),
    };
    match service.learning.record_feedback(&event) {
        Ok(trace_id) => rpc_result(id, json!({ "trace_id": trace_id })),
        Err(LearningError::Feedback(e)) | Err(LearningError::Store(e)) => {
            let (code, message) = store_error_code(&e);
            rpc_error(id, code, &message)
        }
        Err(e) => rpc_error(id, INTERNAL_ERROR, &e.to_string()),
    }
}

fn tool_ingest_documentation(service: &Arc<SparkService>, id: Value, params: &Value) -> Value {
    let Some(blobs) = params.get("blobs").and_then(Value::as_array) else {
        return rpc_error(id, INVALID_PARAMS, "blobs must be an array");
    };
    let mut candidates: Vec<DocBlobCandidate> = Vec::new();
    let mut origins: Vec<usize> = Vec::new();
    let mut rejections: Vec<RejectedBlob> = Vec::new();
    for (index, blob) in blobs.iter().enumerate() {
        match serde_json::from_value::<DocBlobCandidate>(blob.clone()) {
            Ok(c) => {
                candidates.push(c);
                origins.push(index);
            }
            Err(e) => rejections.push(RejectedBlob { index, reason: format!("malformed: {e}") }),
        }
    }
    let mut report = match service.store.put_doc_blobs(candidates) {
        Ok(r) => r,
        Err(e) => {
            let (code, message) = store_error_code(&e);
            return rpc_error(id, code, &message);
        }
    };
    for r in &mut report.rejections {
        r.index = origins[r.index];
    }
    report.rejections.extend(rejections);
    report.rejections.sort_by_key(|r| r.index);
    report.rejected = report.rejections.len() as u64;

    // Rebuild before replying so follow-up calls observe a stable index
    // version; the first query would otherwise pay for the rebuild anyway.
    if let Err(e) = service.retrieval.refresh_indexes() {
        eprintln!("index rebuild after ingest failed: {e}");
    }

    rpc_result(id, serde_json::to_value(report).unwrap())
}

fn tool_memory_stats(service: &Arc<SparkService>, id: Value) -> Value {
    let stats = service.store.stats();
    rpc_result(
        id,
        json!({
            "epoch_number": stats.epoch_number,
            "doc_count": stats.doc_count,
            "trace_count": stats.trace_count,
            "insight_count": stats.insight_count,
            "index_version": service.retrieval.indexes().version(),
        }),
    )
}

/// Run the configured transport until shutdown. Stdio serves the
/// process's stdin/stdout; HTTP blocks until the handle is dropped.
pub fn serve(service: Arc<SparkService>, config: &Config) -> Result<(), ServiceError> {
    match config.server.transport {
        crate::config::Transport::Stdio => {
            let stdin = std::io::stdin();
            let stdout = std::io::stdout();
            serve_stdio(&service, stdin.lock(), stdout.lock())?;
            Ok(())
        }
        crate::config::Transport::Http => {
            let handle = serve_http(service, config.server.port)?;
            eprintln!("listening on 127.0.0.1:{}", handle.port());
            handle.join();
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests;

// used by integration/acceptance tests as well
pub use tools::descriptors;

