//! Durable persistence for documentation, traces, insights, and epoch
//! snapshots.
//!
//! Layout: a single directory holding one append-only JSON Lines journal
//! per collection. State is replayed into memory on open. Writes to each
//! collection funnel through a single journal gate; an epoch commit holds
//! an exclusive commit lock and becomes visible to readers atomically.

mod types;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use types::{
    blob_id, unit_norm_error, CuratedInsight, DocBlob, DocBlobCandidate, ExperientialTrace,
    IngestReport, MemoryEpoch, Outcome, RejectedBlob, StoredRecommendation, NORM_TOLERANCE,
};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt journal {file}: {message}")]
    Corrupt { file: String, message: String },
    #[error("validation: {0}")]
    Validation(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
}

pub type Result<T> = std::result::Result<T, StoreError>;

const DOCS_JOURNAL: &str = "docs.jsonl";
const TRACES_JOURNAL: &str = "traces.jsonl";
const INSIGHTS_JOURNAL: &str = "insights.jsonl";
const EPOCHS_JOURNAL: &str = "epochs.jsonl";
const RECS_JOURNAL: &str = "recommendations.jsonl";
const EPOCH_LOCK: &str = "epoch.lock";

/// Immutable view of the curated knowledge state at one epoch. Safe to
/// share across threads; loading it again after later commits yields the
/// same logical content.
#[derive(Debug, Clone, PartialEq)]
pub struct MemorySnapshot {
    pub epoch_number: u64,
    pub committed_at: DateTime<Utc>,
    pub doc_corpus_version: String,
    pub insights: Arc<Vec<CuratedInsight>>,
    pub stats: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, serde::Serialize)]
pub struct StoreStats {
    pub epoch_number: Option<u64>,
    pub doc_count: u64,
    pub trace_count: u64,
    pub insight_count: u64,
}

struct State {
    doc_index: HashMap<String, usize>,
    docs: Vec<DocBlob>,
    doc_sources: BTreeSet<String>,
    doc_hasher: Sha256,
    traces: Vec<ExperientialTrace>,
    trace_ids: HashSet<String>,
    insights: BTreeMap<String, CuratedInsight>,
    epochs: Vec<MemoryEpoch>,
    recommendations: HashMap<String, StoredRecommendation>,
}

impl State {
    fn empty() -> Self {
        State {
            doc_index: HashMap::new(),
            docs: Vec::new(),
            doc_sources: BTreeSet::new(),
            doc_hasher: Sha256::new(),
            traces: Vec::new(),
            trace_ids: HashSet::new(),
            insights: BTreeMap::new(),
            epochs: Vec::new(),
            recommendations: HashMap::new(),
        }
    }

    fn insert_doc(&mut self, blob: DocBlob) {
        self.doc_hasher.update(blob.blob_id.as_bytes());
        self.doc_sources.insert(blob.source.clone());
        self.doc_index.insert(blob.blob_id.clone(), self.docs.len());
        self.docs.push(blob);
    }

    fn doc_corpus_version(&self) -> String {
        let digest = self.doc_hasher.clone().finalize();
        format!("{}-{}", self.docs.len(), &hex::encode(digest)[..8])
    }
}

pub struct Store {
    root: PathBuf,
    state: RwLock<State>,
    journals: Mutex<Journals>,
    commit_gate: Mutex<()>,
}

struct Journals {
    docs: File,
    traces: File,
    insights: File,
    epochs: File,
    recommendations: File,
}

fn open_append(path: &Path) -> std::io::Result<File> {
    OpenOptions::new().create(true).append(true).open(path)
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    if !path.exists() {
        return Ok(out);
    }
    let reader = BufReader::new(File::open(path)?);
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
            file: path.display().to_string(),
            message: format!("line {}: {}", n + 1, e),
        })?;
        out.push(record);
    }
    Ok(out)
}

fn append_line<T: serde::Serialize>(file: &mut File, record: &T) -> Result<()> {
    let mut line = serde_json::to_string(record).map_err(|e| StoreError::Corrupt {
        file: "<write>".into(),
        message: e.to_string(),
    })?;
    line.push('\n');
    file.write_all(line.as_bytes())?;
    Ok(())
}

impl Store {
    /// Open (or create) a store rooted at `root`, replaying all journals.
    pub fn open(root: impl Into<PathBuf>) -> Result<Store> {
        let root = root.into();
        fs::create_dir_all(&root)?;

        let mut state = State::empty();
        for blob in read_lines::<DocBlob>(&root.join(DOCS_JOURNAL))? {
            if !state.doc_index.contains_key(&blob.blob_id) {
                state.insert_doc(blob);
            }
        }
        for trace in read_lines::<ExperientialTrace>(&root.join(TRACES_JOURNAL))? {
            state.trace_ids.insert(trace.trace_id.clone());
            state.traces.push(trace);
        }
        for insight in read_lines::<CuratedInsight>(&root.join(INSIGHTS_JOURNAL))? {
            // last record per id wins (supersession updates are re-appends)
            state.insights.insert(insight.insight_id.clone(), insight);
        }
        state.epochs = read_lines(&root.join(EPOCHS_JOURNAL))?;
        for rec in read_lines::<StoredRecommendation>(&root.join(RECS_JOURNAL))? {
            state.recommendations.insert(rec.recommendation_id.clone(), rec);
        }

        // A crash between insight and epoch journal writes leaves insights
        // from an uncommitted epoch; drop them and any dangling links.
        let horizon = state.epochs.last().map(|e| e.epoch_number);
        state.insights.retain(|_, i| match horizon {
            Some(h) => i.created_epoch <= h,
            None => false,
        });
        let surviving: HashSet<String> = state.insights.keys().cloned().collect();
        for insight in state.insights.values_mut() {
            if let Some(by) = &insight.superseded_by {
                if !surviving.contains(by) {
                    insight.superseded_by = None;
                }
            }
        }

        let journals = Journals {
            docs: open_append(&root.join(DOCS_JOURNAL))?,
            traces: open_append(&root.join(TRACES_JOURNAL))?,
            insights: open_append(&root.join(INSIGHTS_JOURNAL))?,
            epochs: open_append(&root.join(EPOCHS_JOURNAL))?,
            recommendations: open_append(&root.join(RECS_JOURNAL))?,
        };

        Ok(Store {
            root,
            state: RwLock::new(state),
            journals: Mutex::new(journals),
            commit_gate: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Ingest a batch of documentation candidates. Duplicates (same content
    /// hash) are counted, not re-stored; invalid entries are rejected
    /// per-entry with a reason. Report totals sum to the batch length.
    pub fn put_doc_blobs(&self, batch: Vec<DocBlobCandidate>) -> Result<IngestReport> {
        let mut report = IngestReport::default();
        let mut to_insert: Vec<DocBlob> = Vec::new();
        let mut batch_ids: HashSet<String> = HashSet::new();

        {
            let state = self.state.read().unwrap();
            for (index, cand) in batch.into_iter().enumerate() {
                let reason = if cand.source.is_empty() {
                    Some("empty source")
                } else if cand.path.is_empty() {
                    Some("empty path")
                } else if cand.body.is_empty() {
                    Some("empty body")
                } else {
                    None
                };
                if let Some(reason) = reason {
                    report.rejected += 1;
                    report.rejections.push(RejectedBlob { index, reason: reason.into() });
                    continue;
                }
                let id = blob_id(&cand.source, &cand.path, &cand.body);
                if state.doc_index.contains_key(&id) || !batch_ids.insert(id.clone()) {
                    report.deduplicated += 1;
                    continue;
                }
                report.inserted += 1;
                to_insert.push(DocBlob {
                    blob_id: id,
                    source: cand.source,
                    path: cand.path,
                    title: cand.title,
                    body: cand.body,
                    symbols: cand.symbols,
                    metadata: cand.metadata,
                    embedding: None,
                });
            }
        }

        if !to_insert.is_empty() {
            let mut journals = self.journals.lock().unwrap();
            for blob in &to_insert {
                append_line(&mut journals.docs, blob)?;
            }
            journals.docs.flush()?;
            journals.docs.sync_data()?;
            let mut state = self.state.write().unwrap();
            for blob in to_insert {
                // re-check: a concurrent ingest may have raced us
                if state.doc_index.contains_key(&blob.blob_id) {
                    report.inserted -= 1;
                    report.deduplicated += 1;
                } else {
                    state.insert_doc(blob);
                }
            }
        }
        Ok(report)
    }

    /// Append one trace to the log. Traces are immutable once written.
    pub fn append_trace(&self, trace: ExperientialTrace) -> Result<String> {
        if trace.outcome == Outcome::NoRecommendationAvailable && trace.recommendation_id.is_some()
        {
            return Err(StoreError::Validation(
                "outcome no_recommendation_available forbids recommendation_id".into(),
            ));
        }
        {
            let state = self.state.read().unwrap();
            if state.trace_ids.contains(&trace.trace_id) {
                return Err(StoreError::Validation(format!(
                    "trace {} already exists",
                    trace.trace_id
                )));
            }
            if let Some(rec_id) = &trace.recommendation_id {
                if !state.recommendations.contains_key(rec_id) {
                    return Err(StoreError::Validation(format!(
                        "unknown recommendation_id {rec_id}"
                    )));
                }
            }
        }
        let id = trace.trace_id.clone();
        let mut journals = self.journals.lock().unwrap();
        append_line(&mut journals.traces, &trace)?;
        journals.traces.flush()?;
        journals.traces.sync_data()?;
        let mut state = self.state.write().unwrap();
        state.trace_ids.insert(id.clone());
        state.traces.push(trace);
        Ok(id)
    }

    pub fn put_recommendation(&self, rec: StoredRecommendation) -> Result<()> {
        let mut journals = self.journals.lock().unwrap();
        append_line(&mut journals.recommendations, &rec)?;
        journals.recommendations.flush()?;
        journals.recommendations.sync_data()?;
        let mut state = self.state.write().unwrap();
        state.recommendations.insert(rec.recommendation_id.clone(), rec);
        Ok(())
    }

    pub fn get_recommendation(&self, id: &str) -> Option<StoredRecommendation> {
        self.state.read().unwrap().recommendations.get(id).cloned()
    }

    /// Commit the next epoch: persist `new_insights`, mark `superseded`
    /// (old id, optional successor id) pairs, and snapshot the active set.
    /// The first commit must be the empty epoch 0 baseline.
    pub fn commit_epoch(
        &self,
        new_insights: Vec<CuratedInsight>,
        superseded: &[(String, Option<String>)],
        extra_stats: BTreeMap<String, u64>,
    ) -> Result<MemoryEpoch> {
        let _gate = self
            .commit_gate
            .try_lock()
            .map_err(|_| StoreError::Conflict("epoch commit already in progress".into()))?;

        let mut state = self.state.write().unwrap();
        let epoch_number = state.epochs.len() as u64;
        if epoch_number == 0 && (!new_insights.is_empty() || !superseded.is_empty()) {
            return Err(StoreError::Validation(
                "epoch 0 is the documentation-only baseline and holds no insights".into(),
            ));
        }

        let mut new_insights = new_insights;
        let new_ids: HashSet<String> =
            new_insights.iter().map(|i| i.insight_id.clone()).collect();
        for insight in &mut new_insights {
            insight.created_epoch = epoch_number;
            if insight.supporting_trace_ids.is_empty() {
                return Err(StoreError::Validation(format!(
                    "insight {} has no supporting traces",
                    insight.insight_id
                )));
            }
            for tid in &insight.supporting_trace_ids {
                if !state.trace_ids.contains(tid) {
                    return Err(StoreError::Validation(format!(
                        "insight {} references unknown trace {tid}",
                        insight.insight_id
                    )));
                }
            }
            if state.insights.contains_key(&insight.insight_id) {
                return Err(StoreError::Validation(format!(
                    "insight {} already exists",
                    insight.insight_id
                )));
            }
        }
        for (old_id, by) in superseded {
            let old = state
                .insights
                .get(old_id)
                .ok_or_else(|| StoreError::Validation(format!("unknown insight {old_id}")))?;
            if old.superseded_by.is_some() {
                return Err(StoreError::Validation(format!(
                    "insight {old_id} is already superseded"
                )));
            }
            if let Some(by) = by {
                if !new_ids.contains(by) {
                    return Err(StoreError::Validation(format!(
                        "superseding insight {by} is not part of this commit"
                    )));
                }
            }
        }

        let superseded_ids: HashSet<&String> = superseded.iter().map(|(id, _)| id).collect();
        let mut insight_ids: Vec<String> = state
            .epochs
            .last()
            .map(|e| e.insight_ids.clone())
            .unwrap_or_default();
        insight_ids.retain(|id| !superseded_ids.contains(id));
        insight_ids.extend(new_insights.iter().map(|i| i.insight_id.clone()));

        let mut stats = extra_stats;
        stats.insert("insights_added".into(), new_insights.len() as u64);
        stats.insert("insights_superseded".into(), superseded.len() as u64);
        stats.entry("traces_consumed".into()).or_insert(0);
        if !stats.contains_key("trace_high_water") {
            let prev = state
                .epochs
                .last()
                .and_then(|e| e.stats.get("trace_high_water").copied())
                .unwrap_or(0);
            stats.insert("trace_high_water".into(), prev);
        }

        let epoch = MemoryEpoch {
            epoch_number,
            committed_at: Utc::now(),
            insight_ids,
            doc_corpus_version: state.doc_corpus_version(),
            stats,
        };

        let mut updated_old: Vec<CuratedInsight> = Vec::new();
        for (old_id, by) in superseded {
            let mut old = state.insights.get(old_id).unwrap().clone();
            old.superseded_by = by.clone();
            updated_old.push(old);
        }

        {
            // epoch record last: replay drops insights without a commit
            let mut journals = self.journals.lock().unwrap();
            for insight in &new_insights {
                append_line(&mut journals.insights, insight)?;
            }
            for old in &updated_old {
                append_line(&mut journals.insights, old)?;
            }
            journals.insights.flush()?;
            journals.insights.sync_data()?;
            append_line(&mut journals.epochs, &epoch)?;
            journals.epochs.flush()?;
            journals.epochs.sync_data()?;
        }

        for insight in new_insights {
            state.insights.insert(insight.insight_id.clone(), insight);
        }
        for old in updated_old {
            state.insights.insert(old.insight_id.clone(), old);
        }
        state.epochs.push(epoch.clone());
        Ok(epoch)
    }

    /// Commit the empty baseline epoch 0 if no epoch exists yet.
    pub fn ensure_epoch_zero(&self) -> Result<MemoryEpoch> {
        if let Some(e) = self.latest_epoch() {
            return Ok(e);
        }
        self.commit_epoch(Vec::new(), &[], BTreeMap::new())
    }

    /// Load the snapshot for `epoch_number`, defaulting to the latest.
    /// Supersession links pointing past the requested epoch are cleared so
    /// the snapshot reflects the state as of that epoch.
    pub fn load_snapshot(&self, epoch_number: Option<u64>) -> Result<MemorySnapshot> {
        let state = self.state.read().unwrap();
        let epoch = match epoch_number {
            Some(n) => state
                .epochs
                .get(n as usize)
                .ok_or_else(|| StoreError::NotFound(format!("epoch {n}")))?,
            None => state
                .epochs
                .last()
                .ok_or_else(|| StoreError::NotFound("no epoch committed yet".into()))?,
        };
        let mut insights = Vec::with_capacity(epoch.insight_ids.len());
        for id in &epoch.insight_ids {
            let mut insight = state
                .insights
                .get(id)
                .ok_or_else(|| StoreError::Corrupt {
                    file: EPOCHS_JOURNAL.into(),
                    message: format!("epoch {} references unknown insight {id}", epoch.epoch_number),
                })?
                .clone();
            if let Some(by) = &insight.superseded_by {
                let later = state
                    .insights
                    .get(by)
                    .map(|s| s.created_epoch > epoch.epoch_number)
                    .unwrap_or(true);
                if later {
                    insight.superseded_by = None;
                }
            }
            insights.push(insight);
        }
        Ok(MemorySnapshot {
            epoch_number: epoch.epoch_number,
            committed_at: epoch.committed_at,
            doc_corpus_version: epoch.doc_corpus_version.clone(),
            insights: Arc::new(insights),
            stats: epoch.stats.clone(),
        })
    }

    pub fn latest_epoch(&self) -> Option<MemoryEpoch> {
        self.state.read().unwrap().epochs.last().cloned()
    }

    pub fn epochs(&self) -> Vec<MemoryEpoch> {
        self.state.read().unwrap().epochs.clone()
    }

    /// Cumulative count of traces consumed by committed epochs.
    pub fn trace_high_water(&self) -> u64 {
        self.state
            .read()
            .unwrap()
            .epochs
            .last()
            .and_then(|e| e.stats.get("trace_high_water").copied())
            .unwrap_or(0)
    }

    pub fn count(&self) -> u64 {
        self.state.read().unwrap().docs.len() as u64
    }

    pub fn trace_count(&self) -> u64 {
        self.state.read().unwrap().traces.len() as u64
    }

    /// Counts taken under one read lock: never a torn view.
    pub fn stats(&self) -> StoreStats {
        let state = self.state.read().unwrap();
        StoreStats {
            epoch_number: state.epochs.last().map(|e| e.epoch_number),
            doc_count: state.docs.len() as u64,
            trace_count: state.traces.len() as u64,
            insight_count: state
                .epochs
                .last()
                .map(|e| e.insight_ids.len() as u64)
                .unwrap_or(0),
        }
    }

    pub fn doc_corpus_version(&self) -> String {
        self.state.read().unwrap().doc_corpus_version()
    }

    pub fn doc_sources(&self) -> Vec<String> {
        self.state.read().unwrap().doc_sources.iter().cloned().collect()
    }

    /// Run `f` over the full documentation corpus under the read lock.
    pub fn with_docs<R>(&self, f: impl FnOnce(&[DocBlob]) -> R) -> R {
        f(&self.state.read().unwrap().docs)
    }

    pub fn get_doc(&self, blob_id: &str) -> Option<DocBlob> {
        let state = self.state.read().unwrap();
        state.doc_index.get(blob_id).map(|&i| state.docs[i].clone())
    }

    /// Traces in append order, starting at offset `from`.
    pub fn scan_traces(&self, from: u64) -> Vec<ExperientialTrace> {
        let state = self.state.read().unwrap();
        state.traces.iter().skip(from as usize).cloned().collect()
    }

    pub fn get_insight(&self, id: &str) -> Option<CuratedInsight> {
        self.state.read().unwrap().insights.get(id).cloned()
    }

    pub fn all_insights(&self) -> Vec<CuratedInsight> {
        self.state.read().unwrap().insights.values().cloned().collect()
    }

    /// Acquire the cross-process epoch lock. Held for the duration of a
    /// learning run; a second acquisition conflicts.
    pub fn acquire_epoch_lock(&self) -> Result<EpochLock> {
        let path = self.root.join(EPOCH_LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(EpochLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(StoreError::Conflict(
                "epoch already in progress".into(),
            )),
            Err(e) => Err(e.into()),
        }
    }

    /// Path where serialized index snapshots live.
    pub fn index_snapshot_path(&self) -> PathBuf {
        self.root.join("index_snapshot.json")
    }
}

/// Guard for the cross-process epoch lock file; released on drop.
pub struct EpochLock {
    path: PathBuf,
}

impl Drop for EpochLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
