//! The retrieval agent: intent analysis, search planning, hybrid
//! execution over the snapshot indexes, and recommendation synthesis.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RetrievalSection;
use crate::gateway::{Gateway, GatewayError, GenerationRequest};
use crate::index::{
    build_lexical, bm25_search, fuse, Channel, IndexError, IndexSnapshot, LexicalIndex, Scope,
    VectorIndex, SNAPSHOT_FORMAT_TAG,
};
use crate::store::{CuratedInsight, MemorySnapshot, Store, StoreError, StoredRecommendation};
use crate::tokenize::{is_compound_identifier, tokenize};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("intent analysis: problem must be non-empty")]
    EmptyProblem,
    #[error("intent analysis: {0}")]
    Intent(#[source] GatewayError),
    #[error("intent analysis: malformed provider output: {0}")]
    MalformedIntent(String),
    #[error("plan execution: {0}")]
    Execute(#[from] IndexError),
    #[error("embedding: {0}")]
    Embedding(#[source] GatewayError),
    #[error("synthesis: {0}")]
    Synthesis(#[source] GatewayError),
    #[error("persistence: {0}")]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    ApiUsage,
    Debugging,
    Conceptual,
    Refactoring,
    Other,
}

impl TaskKind {
    fn parse(s: &str) -> TaskKind {
        match s {
            "api_usage" => TaskKind::ApiUsage,
            "debugging" => TaskKind::Debugging,
            "conceptual" => TaskKind::Conceptual,
            "refactoring" => TaskKind::Refactoring,
            _ => TaskKind::Other,
        }
    }
}

/// The analyzed intent behind a problem. `named_symbols` is extracted
/// deterministically from the problem text; only `task_kind` and
/// `normalized_query` come from the provider.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub normalized_query: String,
    pub task_kind: TaskKind,
    pub named_symbols: Vec<String>,
    pub target_libraries: Vec<String>,
    pub raw_problem: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedChannel {
    pub channel: Channel,
    pub query: String,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPlan {
    pub channels: Vec<PlannedChannel>,
    pub fusion_k: usize,
    pub include_insights: bool,
}

/// A fused doc hit with its resolved excerpt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocHit {
    pub doc_ref: String,
    pub score: f64,
    pub source_channel: Channel,
    pub excerpt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citation {
    pub doc_ref: String,
    pub locator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Evidence {
    pub doc_hits: Vec<DocHit>,
    pub insight_hits: Vec<(CuratedInsight, f64)>,
    pub citations: Vec<Citation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub recommendation_id: String,
    pub intent: Intent,
    pub guidance_text: String,
    pub best_practices: Vec<String>,
    pub citations: Vec<Citation>,
    pub epoch_number: u64,
    pub created_at: DateTime<Utc>,
}

/// Indexes built from one documentation corpus version. Immutable once
/// built; swapped atomically on rebuild.
pub struct DocIndexes {
    pub version: u64,
    pub doc_corpus_version: String,
    pub blob: LexicalIndex,
    pub section: LexicalIndex,
    pub symbol: LexicalIndex,
    pub vectors: VectorIndex,
}

/// Owns the current `DocIndexes` and rebuilds when the corpus changes.
pub struct IndexManager {
    current: RwLock<Option<Arc<DocIndexes>>>,
    version: AtomicU64,
}

impl Default for IndexManager {
    fn default() -> Self {
        IndexManager { current: RwLock::new(None), version: AtomicU64::new(0) }
    }
}

impl IndexManager {
    pub fn new() -> IndexManager {
        IndexManager::default()
    }

    pub fn current(&self) -> Option<Arc<DocIndexes>> {
        self.current.read().unwrap().clone()
    }

    /// Monotone counter bumped on every rebuild; lets readers detect
    /// whether two observations came from the same index generation.
    pub fn version(&self) -> u64 {
        self.version.load(Ordering::SeqCst)
    }

    /// Return indexes matching the store's current corpus version,
    /// rebuilding (or loading the persisted snapshot) if stale.
    pub fn ensure_current(
        &self,
        store: &Store,
        gateway: &Gateway,
    ) -> Result<Arc<DocIndexes>, RetrievalError> {
        let want = store.doc_corpus_version();
        if let Some(cur) = self.current() {
            if cur.doc_corpus_version == want {
                return Ok(cur);
            }
        }

        let snapshot_path = store.index_snapshot_path();
        let built = match IndexSnapshot::load(&snapshot_path, &want) {
            Some(snap) => DocIndexes {
                version: 0,
                doc_corpus_version: want.clone(),
                blob: snap.blob,
                section: snap.section,
                symbol: snap.symbol,
                vectors: snap.vectors,
            },
            None => {
                let built = build_doc_indexes(store, gateway, &want)?;
                let snap = IndexSnapshot {
                    format_tag: SNAPSHOT_FORMAT_TAG.into(),
                    doc_corpus_version: want.clone(),
                    blob: built.blob.clone(),
                    section: built.section.clone(),
                    symbol: built.symbol.clone(),
                    vectors: built.vectors.clone(),
                };
                if let Err(e) = snap.save(&snapshot_path) {
                    eprintln!("warning: could not persist index snapshot: {e}");
                }
                built
            }
        };

        let mut guard = self.current.write().unwrap();
        // Another thread may have rebuilt for the same corpus while we
        // worked; keep whichever is already installed.
        if let Some(cur) = guard.as_ref() {
            if cur.doc_corpus_version == want {
                return Ok(cur.clone());
            }
        }
        let version = self.version.fetch_add(1, Ordering::SeqCst) + 1;
        let built = Arc::new(DocIndexes { version, ..built });
        *guard = Some(built.clone());
        Ok(built)
    }
}

fn build_doc_indexes(
    store: &Store,
    gateway: &Gateway,
    doc_corpus_version: &str,
) -> Result<DocIndexes, RetrievalError> {
    // (blob_id, body, section text, symbol text)
    let docs: Vec<(String, String, String, String)> = store.with_docs(|docs| {
        docs.iter()
            .map(|d| {
                let mut symbol_text = d.symbols.join(" ");
                for token in tokenize(&d.body) {
                    if is_compound_identifier(&token) {
                        symbol_text.push(' ');
                        symbol_text.push_str(&token);
                    }
                }
                (
                    d.blob_id.clone(),
                    d.body.clone(),
                    format!("{} {} {}", d.source, d.path, d.title),
                    symbol_text,
                )
            })
            .collect()
    });

    let blob_pairs: Vec<(String, String)> =
        docs.iter().map(|(id, body, _, _)| (id.clone(), body.clone())).collect();
    let section_pairs: Vec<(String, String)> =
        docs.iter().map(|(id, _, sec, _)| (id.clone(), sec.clone())).collect();
    let symbol_pairs: Vec<(String, String)> =
        docs.iter().map(|(id, _, _, sym)| (id.clone(), sym.clone())).collect();

    let blob = build_lexical(&blob_pairs, Scope::Blob)?;
    let section = build_lexical(&section_pairs, Scope::Section)?;
    let symbol = build_lexical(&symbol_pairs, Scope::Symbol)?;

    let mut vectors = VectorIndex::new(gateway.embedding_dim());
    for chunk in docs.chunks(256) {
        let texts: Vec<String> = chunk.iter().map(|(_, body, _, _)| body.clone()).collect();
        let embeddings = gateway.embed(&texts).map_err(RetrievalError::Embedding)?;
        for ((id, _, _, _), emb) in chunk.iter().zip(embeddings) {
            vectors.insert(id.clone(), emb)?;
        }
    }

    Ok(DocIndexes {
        version: 0,
        doc_corpus_version: doc_corpus_version.to_string(),
        blob,
        section,
        symbol,
        vectors,
    })
}

/// Truncate at a UTF-8 boundary at or below `max` bytes.
fn truncate_utf8(s: &str, max: usize) -> &str {
    if s.len() <= max {
        return s;
    }
    let mut end = max;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    &s[..end]
}

const EXCERPT_BYTES: usize = 400;

pub struct RetrievalAgent {
    store: Arc<Store>,
    gateway: Arc<Gateway>,
    config: RetrievalSection,
    indexes: IndexManager,
}

impl RetrievalAgent {
    pub fn new(store: Arc<Store>, gateway: Arc<Gateway>, config: RetrievalSection) -> Self {
        RetrievalAgent { store, gateway, config, indexes: IndexManager::new() }
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    pub fn gateway(&self) -> &Arc<Gateway> {
        &self.gateway
    }

    pub fn indexes(&self) -> &IndexManager {
        &self.indexes
    }

    pub fn refresh_indexes(&self) -> Result<Arc<DocIndexes>, RetrievalError> {
        self.indexes.ensure_current(&self.store, &self.gateway)
    }

    /// Symbol and library extraction is deterministic (tokenizer +
    /// corpus-name matching); the provider only classifies `task_kind`
    /// and normalizes the query.
    pub fn analyze_intent(&self, problem: &str) -> Result<Intent, RetrievalError> {
        if problem.trim().is_empty() {
            return Err(RetrievalError::EmptyProblem);
        }
        let truncated = truncate_utf8(problem, self.config.max_intent_bytes);
        let tokens = tokenize(truncated);

        let mut named_symbols = Vec::new();
        for t in &tokens {
            if is_compound_identifier(t) && !named_symbols.contains(t) {
                named_symbols.push(t.clone());
            }
        }
        let token_set: std::collections::HashSet<&str> =
            tokens.iter().map(|t| t.as_str()).collect();
        let mut target_libraries: Vec<String> = self
            .store
            .doc_sources()
            .into_iter()
            .filter(|s| token_set.contains(s.to_lowercase().as_str()))
            .collect();
        target_libraries.sort();

        let mut vars = BTreeMap::new();
        vars.insert("problem".to_string(), truncated.to_string());
        let generation = self
            .gateway
            .generate(&GenerationRequest::new("intent", vars))
            .map_err(RetrievalError::Intent)?;
        let parsed: serde_json::Value = serde_json::from_str(&generation.text)
            .map_err(|e| RetrievalError::MalformedIntent(format!("{e}: {}", generation.text)))?;
        let normalized_query = parsed
            .get("normalized_query")
            .and_then(|v| v.as_str())
            .ok_or_else(|| {
                RetrievalError::MalformedIntent("missing normalized_query".into())
            })?
            .to_string();
        let task_kind = TaskKind::parse(
            parsed.get("task_kind").and_then(|v| v.as_str()).unwrap_or("other"),
        );

        Ok(Intent {
            normalized_query,
            task_kind,
            named_symbols,
            target_libraries,
            raw_problem: problem.to_string(),
        })
    }

    /// Pure function of (intent, active epoch).
    pub fn plan_search(&self, intent: &Intent, active_epoch: u64) -> SearchPlan {
        let k = self.config.channel_k;
        let mut channels = vec![
            PlannedChannel {
                channel: Channel::LexicalBlob,
                query: intent.normalized_query.clone(),
                k,
            },
            PlannedChannel {
                channel: Channel::LexicalSection,
                query: intent.normalized_query.clone(),
                k,
            },
            PlannedChannel {
                channel: Channel::Vector,
                query: intent.normalized_query.clone(),
                k,
            },
        ];
        if !intent.named_symbols.is_empty() {
            channels.push(PlannedChannel {
                channel: Channel::LexicalSymbol,
                query: intent.named_symbols.join(" "),
                k,
            });
        }
        SearchPlan { channels, fusion_k: self.config.fusion_k, include_insights: active_epoch > 0 }
    }

    pub fn execute_plan(
        &self,
        plan: &SearchPlan,
        indexes: &DocIndexes,
        snapshot: &MemorySnapshot,
    ) -> Result<Evidence, RetrievalError> {
        let mut rankings: Vec<Vec<crate::index::RankedHit>> = Vec::new();
        let mut query_embedding: Option<Vec<f32>> = None;
        for ch in &plan.channels {
            let list = match ch.channel {
                Channel::LexicalBlob => bm25_search(&indexes.blob, &ch.query, ch.k),
                Channel::LexicalSection => bm25_search(&indexes.section, &ch.query, ch.k),
                Channel::LexicalSymbol => bm25_search(&indexes.symbol, &ch.query, ch.k),
                Channel::Vector => {
                    let emb = self
                        .gateway
                        .embed(&[ch.query.clone()])
                        .map_err(RetrievalError::Embedding)?
                        .remove(0);
                    let hits = indexes.vectors.knn_search(&emb, ch.k)?;
                    query_embedding = Some(emb);
                    hits
                }
                Channel::Insight => continue,
            };
            if ch.channel == Channel::LexicalSymbol {
                // doubled fusion weight for the symbol channel
                rankings.push(list.clone());
            }
            rankings.push(list);
        }

        let fused = fuse(&rankings, plan.fusion_k);
        let mut doc_hits = Vec::with_capacity(fused.len());
        let mut citations = Vec::with_capacity(fused.len());
        for hit in fused {
            let Some(doc) = self.store.get_doc(&hit.doc_ref) else { continue };
            doc_hits.push(DocHit {
                doc_ref: hit.doc_ref.clone(),
                score: hit.score,
                source_channel: hit.source_channel,
                excerpt: truncate_utf8(&doc.body, EXCERPT_BYTES).to_string(),
            });
            citations.push(Citation {
                doc_ref: hit.doc_ref,
                locator: format!("{}:{}", doc.source, doc.path),
            });
        }

        let mut insight_hits = Vec::new();
        if plan.include_insights && !snapshot.insights.is_empty() {
            let query_embedding = match query_embedding {
                Some(v) => v,
                None => {
                    let query = plan
                        .channels
                        .iter()
                        .map(|c| c.query.as_str())
                        .next()
                        .unwrap_or("");
                    self.gateway
                        .embed(&[query.to_string()])
                        .map_err(RetrievalError::Embedding)?
                        .remove(0)
                }
            };
            for insight in snapshot.insights.iter() {
                let embedding = match &insight.embedding {
                    Some(e) => e.clone(),
                    None => self
                        .gateway
                        .embed(&[insight.lesson_text.clone()])
                        .map_err(RetrievalError::Embedding)?
                        .remove(0),
                };
                let score = crate::index::dot(&query_embedding, &embedding);
                if score >= self.config.insight_threshold {
                    insight_hits.push((insight.clone(), score));
                }
            }
            insight_hits.sort_by(|a, b| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then_with(|| a.0.insight_id.cmp(&b.0.insight_id))
            });
        }

        Ok(Evidence { doc_hits, insight_hits, citations })
    }

    /// Synthesize, persist, and return the recommendation. Persistence
    /// happens before return so feedback can reference it.
    pub fn synthesize(
        &self,
        intent: &Intent,
        evidence: &Evidence,
        code_context: &str,
        snapshot: &MemorySnapshot,
    ) -> Result<Recommendation, RetrievalError> {
        let documentation = evidence
            .doc_hits
            .iter()
            .zip(&evidence.citations)
            .map(|(hit, citation)| format!("[{}] {}", citation.locator, hit.excerpt))
            .collect::<Vec<_>>()
            .join("\n");
        let insights = evidence
            .insight_hits
            .iter()
            .map(|(insight, _)| format!("- {}", insight.lesson_text))
            .collect::<Vec<_>>()
            .join("\n");

        let mut vars = BTreeMap::new();
        vars.insert(
            "problem".to_string(),
            truncate_utf8(&intent.raw_problem, self.config.max_intent_bytes).to_string(),
        );
        vars.insert("documentation".to_string(), documentation);
        vars.insert("insights".to_string(), insights);
        let generation = self
            .gateway
            .generate(&GenerationRequest::new("synthesis", vars))
            .map_err(RetrievalError::Synthesis)?;

        let mut best_practices: Vec<String> =
            evidence.insight_hits.iter().map(|(i, _)| i.lesson_text.clone()).collect();
        for citation in &evidence.citations {
            best_practices.push(format!("See {}", citation.locator));
        }

        let recommendation = Recommendation {
            recommendation_id: uuid::Uuid::new_v4().to_string(),
            intent: intent.clone(),
            guidance_text: generation.text,
            best_practices,
            citations: evidence.citations.clone(),
            epoch_number: snapshot.epoch_number,
            created_at: Utc::now(),
        };
        self.store.put_recommendation(StoredRecommendation {
            recommendation_id: recommendation.recommendation_id.clone(),
            problem_text: intent.raw_problem.clone(),
            code_context: code_context.to_string(),
            epoch_number: snapshot.epoch_number,
            created_at: recommendation.created_at,
        })?;
        Ok(recommendation)
    }

    /// Full workflow against the latest epoch.
    pub fn recommend(
        &self,
        problem: &str,
        code_context: &str,
    ) -> Result<Recommendation, RetrievalError> {
        let snapshot = self.store.load_snapshot(None)?;
        self.recommend_with_snapshot(problem, code_context, &snapshot)
    }

    /// Full workflow pinned to a specific epoch (`None` = latest).
    pub fn recommend_at_epoch(
        &self,
        problem: &str,
        code_context: &str,
        epoch: Option<u64>,
    ) -> Result<Recommendation, RetrievalError> {
        let snapshot = self.store.load_snapshot(epoch)?;
        self.recommend_with_snapshot(problem, code_context, &snapshot)
    }

    /// Full workflow against a caller-held snapshot. The snapshot is
    /// acquired once, so a concurrent epoch commit cannot mix evidence
    /// from two epochs into one call.
    pub fn recommend_with_snapshot(
        &self,
        problem: &str,
        code_context: &str,
        snapshot: &MemorySnapshot,
    ) -> Result<Recommendation, RetrievalError> {
        let indexes = self.refresh_indexes()?;
        let intent = self.analyze_intent(problem)?;
        let plan = self.plan_search(&intent, snapshot.epoch_number);
        let evidence = self.execute_plan(&plan, &indexes, snapshot)?;
        self.synthesize(&intent, &evidence, code_context, snapshot)
    }
}
