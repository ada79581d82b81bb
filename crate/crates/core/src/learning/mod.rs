//! The experiential learning loop: feedback capture, insight extraction
//! and clustering, curation, and epoch commits.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::LearningSection;
use crate::gateway::{Gateway, GatewayError, GenerationRequest};
use crate::index::dot;
use crate::store::{
    CuratedInsight, ExperientialTrace, MemorySnapshot, Outcome, Store, StoreError,
};

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("feedback: {0}")]
    Feedback(#[source] StoreError),
    #[error("extraction: {0}")]
    Extraction(#[source] GatewayError),
    #[error("consolidation: {0}")]
    Consolidation(#[source] GatewayError),
    #[error("embedding: {0}")]
    Embedding(#[source] GatewayError),
    #[error("commit: {0}")]
    Commit(#[source] StoreError),
    #[error("{0}")]
    Store(#[from] StoreError),
    #[error("validation: {0}")]
    Validation(String),
}

/// Feedback on a previously issued recommendation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub recommendation_id: String,
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hindsight_feedback: Option<String>,
    pub agent_tag: String,
    pub timestamp: DateTime<Utc>,
}

/// A lesson mined from traces, before clustering and curation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateInsight {
    pub lesson_text: String,
    pub supporting_trace_ids: Vec<String>,
    /// 1 − max cosine similarity to the active insights.
    pub novelty: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InsightCluster {
    pub cluster_id: String,
    pub member_candidates: Vec<CandidateInsight>,
    pub centroid: Vec<f32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch_number: u64,
    pub traces_consumed: u64,
    pub candidates_extracted: u64,
    pub clusters_formed: u64,
    pub insights_committed: u64,
    pub insights_superseded: u64,
    /// Malformed provider outputs skipped during extraction.
    pub extraction_rejects: u64,
}

/// Deterministic insight identity: hash of the lesson and its sorted
/// supporting trace ids. Reruns over the same traces produce the same id,
/// which makes crash-replay idempotent at the store layer.
pub fn insight_id(lesson_text: &str, supporting_trace_ids: &[String]) -> String {
    let mut ids: Vec<&str> = supporting_trace_ids.iter().map(|s| s.as_str()).collect();
    ids.sort_unstable();
    let mut hasher = Sha256::new();
    hasher.update(lesson_text.as_bytes());
    for id in ids {
        hasher.update([0u8]);
        hasher.update(id.as_bytes());
    }
    format!("ins-{}", hex::encode(&hasher.finalize()[..16]))
}

/// Deterministic trace identity for synthetic traces.
fn synthetic_trace_id(problem: &str, solution: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(problem.as_bytes());
    hasher.update([0u8]);
    hasher.update(solution.as_bytes());
    format!("syn-{}", hex::encode(&hasher.finalize()[..16]))
}

pub struct LearningLoop {
    store: Arc<Store>,
    gateway: Arc<Gateway>,
    config: LearningSection,
}

impl LearningLoop {
    pub fn new(store: Arc<Store>, gateway: Arc<Gateway>, config: LearningSection) -> Self {
        LearningLoop { store, gateway, config }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    /// Materialize a feedback event as an `ExperientialTrace`, resolving
    /// the recommendation it references for problem context.
    pub fn record_feedback(&self, event: &FeedbackEvent) -> Result<String, LearningError> {
        let rec = self
            .store
            .get_recommendation(&event.recommendation_id)
            .ok_or_else(|| {
                LearningError::Feedback(StoreError::NotFound(format!(
                    "recommendation {}",
                    event.recommendation_id
                )))
            })?;
        let trace = ExperientialTrace {
            trace_id: format!("tr-{}", uuid::Uuid::new_v4()),
            timestamp: event.timestamp,
            problem_text: rec.problem_text,
            code_context: rec.code_context,
            recommendation_id: Some(event.recommendation_id.clone()),
            outcome: event.outcome,
            hindsight_feedback: event.hindsight_feedback.clone(),
            agent_tag: event.agent_tag.clone(),
        };
        self.store.append_trace(trace).map_err(LearningError::Feedback)
    }

    /// Mine candidates from traces. Accepted traces without hindsight
    /// carry nothing to correct and yield no candidate. Malformed
    /// provider output skips the trace and bumps the rejects tally.
    pub fn extract_candidates(
        &self,
        traces: &[ExperientialTrace],
        active_insights: &[CuratedInsight],
    ) -> Result<(Vec<CandidateInsight>, u64), LearningError> {
        let active_embeddings = self.insight_embeddings(active_insights)?;
        let mut candidates = Vec::new();
        let mut rejects = 0u64;
        for trace in traces {
            if trace.outcome == Outcome::Accepted && trace.hindsight_feedback.is_none() {
                continue;
            }
            let Some(hindsight) = &trace.hindsight_feedback else { continue };
            if hindsight.trim().is_empty() {
                continue;
            }
            let mut vars = BTreeMap::new();
            vars.insert("trace_id".to_string(), trace.trace_id.clone());
            vars.insert("problem".to_string(), trace.problem_text.clone());
            vars.insert("outcome".to_string(), format!("{:?}", trace.outcome).to_lowercase());
            vars.insert("hindsight".to_string(), hindsight.clone());
            let generation = self
                .gateway
                .generate(&GenerationRequest::new("insight_extraction", vars))
                .map_err(LearningError::Extraction)?;
            let Ok(parsed) = serde_json::from_str::<serde_json::Value>(&generation.text) else {
                rejects += 1;
                continue;
            };
            let lesson = parsed.get("lesson").and_then(|v| v.as_str()).unwrap_or("");
            if lesson.is_empty() {
                rejects += 1;
                continue;
            }
            let trace_ids: Vec<String> = parsed
                .get("trace_ids")
                .and_then(|v| v.as_array())
                .map(|a| {
                    a.iter()
                        .filter_map(|v| v.as_str())
                        .filter(|id| *id == trace.trace_id)
                        .map(String::from)
                        .collect()
                })
                .unwrap_or_default();
            if trace_ids.is_empty() {
                rejects += 1;
                continue;
            }
            let embedding =
                self.gateway.embed(&[lesson.to_string()]).map_err(LearningError::Embedding)?
                    .remove(0);
            let novelty = 1.0
                - active_embeddings
                    .iter()
                    .map(|e| dot(&embedding, e))
                    .fold(f64::NEG_INFINITY, f64::max)
                    .max(0.0)
                    .min(1.0);
            let novelty = if active_embeddings.is_empty() { 1.0 } else { novelty };
            candidates.push(CandidateInsight {
                lesson_text: lesson.to_string(),
                supporting_trace_ids: trace_ids,
                novelty,
                embedding: Some(embedding),
            });
        }
        Ok((candidates, rejects))
    }

    fn insight_embeddings(
        &self,
        insights: &[CuratedInsight],
    ) -> Result<Vec<Vec<f32>>, LearningError> {
        insights
            .iter()
            .map(|i| match &i.embedding {
                Some(e) => Ok(e.clone()),
                None => Ok(self
                    .gateway
                    .embed(&[i.lesson_text.clone()])
                    .map_err(LearningError::Embedding)?
                    .remove(0)),
            })
            .collect()
    }

    /// Greedy single-pass clustering: candidates in lesson_text
    /// lexicographic order join the first cluster whose centroid cosine is
    /// at or above the threshold, else open a new cluster. Centroids are
    /// renormalized running means.
    pub fn cluster_candidates(
        &self,
        candidates: &[CandidateInsight],
    ) -> Result<Vec<InsightCluster>, LearningError> {
        let mut ordered: Vec<&CandidateInsight> = candidates.iter().collect();
        ordered.sort_by(|a, b| {
            a.lesson_text
                .cmp(&b.lesson_text)
                .then_with(|| a.supporting_trace_ids.cmp(&b.supporting_trace_ids))
        });

        // (members, running mean, renormalized centroid)
        let mut clusters: Vec<(Vec<CandidateInsight>, Vec<f64>, Vec<f32>)> = Vec::new();
        for cand in ordered {
            let embedding = match &cand.embedding {
                Some(e) => e.clone(),
                None => self
                    .gateway
                    .embed(&[cand.lesson_text.clone()])
                    .map_err(LearningError::Embedding)?
                    .remove(0),
            };
            let mut joined = false;
            for (members, mean, centroid) in &mut clusters {
                if dot(&embedding, centroid) >= self.config.cluster_threshold {
                    let n = members.len() as f64;
                    for (m, x) in mean.iter_mut().zip(&embedding) {
                        *m = (*m * n + *x as f64) / (n + 1.0);
                    }
                    *centroid = renormalize(mean);
                    members.push(cand.clone());
                    joined = true;
                    break;
                }
            }
            if !joined {
                let mean: Vec<f64> = embedding.iter().map(|x| *x as f64).collect();
                let centroid = renormalize(&mean);
                clusters.push((vec![cand.clone()], mean, centroid));
            }
        }

        Ok(clusters
            .into_iter()
            .map(|(members, _, centroid)| {
                let trace_ids: Vec<String> = members
                    .iter()
                    .flat_map(|m| m.supporting_trace_ids.iter().cloned())
                    .collect();
                InsightCluster {
                    cluster_id: format!(
                        "cl-{}",
                        &insight_id(&members[0].lesson_text, &trace_ids)[4..20]
                    ),
                    member_candidates: members,
                    centroid,
                }
            })
            .collect())
    }

    /// Curate clusters against the active insight set. Returns the new
    /// insights and the (old id, successor id) supersession pairs.
    pub fn curate(
        &self,
        clusters: &[InsightCluster],
        active_insights: &[CuratedInsight],
    ) -> Result<(Vec<CuratedInsight>, Vec<(String, Option<String>)>), LearningError> {
        let active_embeddings = self.insight_embeddings(active_insights)?;
        let mut new_insights = Vec::new();
        let mut superseded: Vec<(String, Option<String>)> = Vec::new();
        let mut superseded_ids: HashSet<String> = HashSet::new();

        for cluster in clusters {
            let mut trace_ids: Vec<String> = cluster
                .member_candidates
                .iter()
                .flat_map(|m| m.supporting_trace_ids.iter().cloned())
                .collect();
            trace_ids.sort();
            trace_ids.dedup();
            let support = trace_ids.len();
            if support < self.config.min_support {
                continue;
            }
            let max_novelty = cluster
                .member_candidates
                .iter()
                .map(|m| m.novelty)
                .fold(0.0f64, f64::max);
            if self.config.enable_novelty_filter
                && support == 1
                && max_novelty < self.config.novelty_floor
            {
                continue;
            }

            let lesson_text = if cluster.member_candidates.len() == 1 {
                cluster.member_candidates[0].lesson_text.clone()
            } else {
                let lessons = cluster
                    .member_candidates
                    .iter()
                    .map(|m| m.lesson_text.as_str())
                    .collect::<Vec<_>>()
                    .join("\n");
                let mut vars = BTreeMap::new();
                vars.insert("lessons".to_string(), lessons);
                self.gateway
                    .generate(&GenerationRequest::new("insight_consolidation", vars))
                    .map_err(LearningError::Consolidation)?
                    .text
            };

            let new_id = insight_id(&lesson_text, &trace_ids);
            let mut supersedes_this = Vec::new();
            if self.config.enable_supersession {
                for (insight, embedding) in active_insights.iter().zip(&active_embeddings) {
                    if superseded_ids.contains(&insight.insight_id) {
                        continue;
                    }
                    let cos = dot(&cluster.centroid, embedding);
                    if cos >= self.config.supersede_threshold
                        && support > insight.supporting_trace_ids.len()
                    {
                        supersedes_this.push(insight.insight_id.clone());
                    }
                }
            }
            for old in &supersedes_this {
                superseded_ids.insert(old.clone());
                superseded.push((old.clone(), Some(new_id.clone())));
            }

            let embedding = self
                .gateway
                .embed(&[lesson_text.clone()])
                .map_err(LearningError::Embedding)?
                .remove(0);
            new_insights.push(CuratedInsight {
                insight_id: new_id,
                lesson_text,
                supporting_trace_ids: trace_ids,
                cluster_id: cluster.cluster_id.clone(),
                confidence: support as f64 / (support as f64 + 2.0),
                created_epoch: 0, // set by commit_epoch
                superseded_by: None,
                embedding: Some(embedding),
            });
        }
        Ok((new_insights, superseded))
    }

    /// Run one full epoch: consume traces past the high-water mark,
    /// extract, cluster, curate, and commit. Exactly one run at a time
    /// (cross-process epoch lock); with no new traces this is a no-op
    /// report and the epoch does not advance.
    pub fn run_epoch(&self) -> Result<EpochReport, LearningError> {
        let _lock = self.store.acquire_epoch_lock()?;
        self.store.ensure_epoch_zero()?;
        let snapshot = self.store.load_snapshot(None)?;
        let high_water = self.store.trace_high_water();
        let traces = self.store.scan_traces(high_water);
        if traces.is_empty() {
            return Ok(EpochReport {
                epoch_number: snapshot.epoch_number,
                ..EpochReport::default()
            });
        }

        let active = self.active_insights(&snapshot);
        let (candidates, rejects) = self.extract_candidates(&traces, &active)?;
        let clusters = self.cluster_candidates(&candidates)?;
        let (new_insights, superseded) = self.curate(&clusters, &active)?;

        let mut stats = BTreeMap::new();
        stats.insert("traces_consumed".to_string(), traces.len() as u64);
        stats.insert("trace_high_water".to_string(), high_water + traces.len() as u64);
        stats.insert("candidates_extracted".to_string(), candidates.len() as u64);
        stats.insert("clusters_formed".to_string(), clusters.len() as u64);
        stats.insert("extraction_rejects".to_string(), rejects);
        let committed = new_insights.len() as u64;
        let superseded_count = superseded.len() as u64;
        let epoch = self
            .store
            .commit_epoch(new_insights, &superseded, stats)
            .map_err(LearningError::Commit)?;

        let report = EpochReport {
            epoch_number: epoch.epoch_number,
            traces_consumed: traces.len() as u64,
            candidates_extracted: candidates.len() as u64,
            clusters_formed: clusters.len() as u64,
            insights_committed: committed,
            insights_superseded: superseded_count,
            extraction_rejects: rejects,
        };
        Ok(report)
    }

    fn active_insights(&self, snapshot: &MemorySnapshot) -> Vec<CuratedInsight> {
        snapshot.insights.iter().cloned().collect()
    }

    /// Generate synthetic traces by comparing problems against reference
    /// solutions; the hindsight mimics the instruction a user would issue.
    pub fn generate_synthetic_traces(
        &self,
        problems: &[String],
        reference_solutions: &[String],
    ) -> Result<Vec<ExperientialTrace>, LearningError> {
        if problems.len() != reference_solutions.len() {
            return Err(LearningError::Validation(format!(
                "{} problems but {} reference solutions",
                problems.len(),
                reference_solutions.len()
            )));
        }
        let mut traces = Vec::with_capacity(problems.len());
        for (problem, solution) in problems.iter().zip(reference_solutions) {
            let mut vars = BTreeMap::new();
            vars.insert("problem".to_string(), problem.clone());
            vars.insert("reference_solution".to_string(), solution.clone());
            let generation = self
                .gateway
                .generate(&GenerationRequest::new("synthetic_feedback", vars))
                .map_err(LearningError::Extraction)?;
            traces.push(ExperientialTrace {
                trace_id: synthetic_trace_id(problem, solution),
                timestamp: DateTime::<Utc>::UNIX_EPOCH,
                problem_text: problem.clone(),
                code_context: String::new(),
                recommendation_id: None,
                outcome: Outcome::NoRecommendationAvailable,
                hindsight_feedback: Some(generation.text),
                agent_tag: "synthetic".to_string(),
            });
        }
        Ok(traces)
    }
}

fn renormalize(mean: &[f64]) -> Vec<f32> {
    let norm: f64 = mean.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut v = vec![0.0f32; mean.len()];
        if !v.is_empty() {
            v[0] = 1.0;
        }
        return v;
    }
    mean.iter().map(|x| (x / norm) as f32).collect()
}
