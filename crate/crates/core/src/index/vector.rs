//! Exact nearest-neighbor search by linear scan over unit vectors.

use serde::{Deserialize, Serialize};

use super::{Channel, IndexError, RankedHit};
use crate::store::{unit_norm_error, NORM_TOLERANCE};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VectorIndex {
    dim: usize,
    entries: Vec<(String, Vec<f32>)>,
}

impl VectorIndex {
    pub fn new(dim: usize) -> VectorIndex {
        VectorIndex { dim, entries: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, doc_ref: String, vector: Vec<f32>) -> Result<(), IndexError> {
        if vector.len() != self.dim {
            return Err(IndexError::DimensionMismatch { query: vector.len(), index: self.dim });
        }
        let err = unit_norm_error(&vector);
        if err > NORM_TOLERANCE {
            return Err(IndexError::NotUnitNorm(err));
        }
        self.entries.push((doc_ref, vector));
        Ok(())
    }

    /// Top-`k` entries by cosine similarity (dot product of unit vectors),
    /// exact linear scan.
    pub fn knn_search(&self, query_vec: &[f32], k: usize) -> Result<Vec<RankedHit>, IndexError> {
        if query_vec.len() != self.dim {
            return Err(IndexError::DimensionMismatch {
                query: query_vec.len(),
                index: self.dim,
            });
        }
        let mut scored: Vec<(usize, f64)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, (_, v))| (i, dot(query_vec, v)))
            .collect();
        // canonical order without cloning doc refs for the whole index
        scored.sort_unstable_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.entries[a.0].0.cmp(&self.entries[b.0].0))
        });
        scored.truncate(k);
        Ok(scored
            .into_iter()
            .map(|(i, score)| RankedHit {
                doc_ref: self.entries[i].0.clone(),
                score,
                source_channel: Channel::Vector,
            })
            .collect())
    }
}

pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64) * (*y as f64)).sum()
}
