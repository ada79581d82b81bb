//! Hybrid retrieval index: multi-scope lexical search plus exact vector
//! similarity, with deterministic reciprocal rank fusion.

mod fusion;
mod lexical;
mod vector;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fusion::{fuse, RRF_CONSTANT};
pub use lexical::{bm25_search, build_lexical, idf, LexicalIndex, BM25_B, BM25_K1};
pub use vector::{dot, VectorIndex};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("duplicate doc ref: {0}")]
    DuplicateDocRef(String),
    #[error("dimension mismatch: query has {query}, index has {index}")]
    DimensionMismatch { query: usize, index: usize },
    #[error("vector is not unit norm (error {0})")]
    NotUnitNorm(f64),
}

/// Lexical scope of an index: full body, path+title, or the symbol list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Blob,
    Section,
    Symbol,
}

/// Which retrieval channel produced a hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    LexicalBlob,
    LexicalSection,
    LexicalSymbol,
    Vector,
    Insight,
}

/// One scored result. Result lists are ordered by descending score with
/// ties broken by ascending doc_ref, a total order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedHit {
    pub doc_ref: String,
    pub score: f64,
    pub source_channel: Channel,
}

/// Sort hits into the canonical total order and truncate to `k`.
pub(crate) fn rank_and_truncate(mut hits: Vec<RankedHit>, k: usize) -> Vec<RankedHit> {
    hits.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.doc_ref.cmp(&b.doc_ref))
    });
    hits.truncate(k);
    hits
}

/// Format tag for serialized index snapshots. Bump on layout changes;
/// loaders rebuild from source on mismatch.
pub const SNAPSHOT_FORMAT_TAG: &str = "spark-index-v1";

/// Serializable bundle of all indexes built from one store snapshot.
#[derive(Debug, Serialize, Deserialize)]
pub struct IndexSnapshot {
    pub format_tag: String,
    pub doc_corpus_version: String,
    pub blob: LexicalIndex,
    pub section: LexicalIndex,
    pub symbol: LexicalIndex,
    pub vectors: VectorIndex,
}

impl IndexSnapshot {
    pub fn save(&self, path: &std::path::Path) -> std::io::Result<()> {
        let tmp = path.with_extension("tmp");
        let file = std::fs::File::create(&tmp)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        std::fs::rename(tmp, path)
    }

    /// Load a snapshot; `None` when missing, unreadable, stale, or from a
    /// different format version — callers rebuild from source.
    pub fn load(path: &std::path::Path, doc_corpus_version: &str) -> Option<IndexSnapshot> {
        let file = std::fs::File::open(path).ok()?;
        let snap: IndexSnapshot = serde_json::from_reader(std::io::BufReader::new(file)).ok()?;
        if snap.format_tag != SNAPSHOT_FORMAT_TAG || snap.doc_corpus_version != doc_corpus_version
        {
            return None;
        }
        Some(snap)
    }
}
