//! Domain types persisted by the store.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Tolerance for unit-norm checks on embeddings.
pub const NORM_TOLERANCE: f64 = 1e-6;

/// One unit of ingested documentation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocBlob {
    pub blob_id: String,
    pub source: String,
    pub path: String,
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub symbols: Vec<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
}

/// Input shape for ingest: a `DocBlob` before its content hash is computed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DocBlobCandidate {
    pub source: String,
    pub path: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default)]
    pub symbols: Vec<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

/// Deterministic content identity: SHA-256 over source, path, and body,
/// NUL-separated, hex-encoded.
pub fn blob_id(source: &str, path: &str, body: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(source.as_bytes());
    hasher.update([0u8]);
    hasher.update(path.as_bytes());
    hasher.update([0u8]);
    hasher.update(body.as_bytes());
    hex::encode(hasher.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Accepted,
    Rejected,
    PartiallyUseful,
    NoRecommendationAvailable,
}

/// One captured interaction: problem, recommendation, outcome, hindsight.
/// Append-only once written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperientialTrace {
    pub trace_id: String,
    pub timestamp: DateTime<Utc>,
    pub problem_text: String,
    #[serde(default)]
    pub code_context: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommendation_id: Option<String>,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hindsight_feedback: Option<String>,
    pub agent_tag: String,
}

/// A generalizable lesson extracted from clustered traces and committed at
/// an epoch boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedInsight {
    pub insight_id: String,
    pub lesson_text: String,
    pub supporting_trace_ids: Vec<String>,
    pub cluster_id: String,
    pub confidence: f64,
    pub created_epoch: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superseded_by: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
}

/// An immutable, numbered snapshot of the curated knowledge state.
///
/// `insight_ids` is the full active set at this epoch. `stats` carries at
/// least `traces_consumed`, `insights_added`, `insights_superseded`, and
/// the cumulative `trace_high_water` mark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryEpoch {
    pub epoch_number: u64,
    pub committed_at: DateTime<Utc>,
    pub insight_ids: Vec<String>,
    pub doc_corpus_version: String,
    #[serde(default)]
    pub stats: BTreeMap<String, u64>,
}

/// Counters returned by a documentation ingest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub inserted: u64,
    pub deduplicated: u64,
    pub rejected: u64,
    #[serde(default)]
    pub rejections: Vec<RejectedBlob>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedBlob {
    /// Index of the candidate in the submitted batch.
    pub index: usize,
    pub reason: String,
}

/// A persisted recommendation, stored so that later feedback can resolve
/// the full interaction context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredRecommendation {
    pub recommendation_id: String,
    pub problem_text: String,
    #[serde(default)]
    pub code_context: String,
    pub epoch_number: u64,
    pub created_at: DateTime<Utc>,
}

pub fn unit_norm_error(v: &[f32]) -> f64 {
    let norm: f64 = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>().sqrt();
    (norm - 1.0).abs()
}
