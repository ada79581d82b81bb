//! Inverted index with BM25 scoring.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Channel, IndexError, RankedHit, Scope};
use crate::tokenize::tokenize;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LexicalIndex {
    pub scope: Scope,
    /// term -> postings as (index into doc_refs, term frequency)
    postings: HashMap<String, Vec<(u32, u32)>>,
    doc_refs: Vec<String>,
    doc_lengths: Vec<u32>,
    avg_doc_length: f64,
}

impl LexicalIndex {
    pub fn doc_count(&self) -> usize {
        self.doc_refs.len()
    }

    pub fn avg_doc_length(&self) -> f64 {
        self.avg_doc_length
    }

    pub fn doc_length(&self, doc_ref: &str) -> Option<u32> {
        let i = self.doc_refs.iter().position(|r| r == doc_ref)?;
        Some(self.doc_lengths[i])
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.postings.keys().map(String::as_str)
    }

    pub fn has_term(&self, term: &str) -> bool {
        self.postings.contains_key(term)
    }

    pub fn postings(&self, term: &str) -> Option<impl Iterator<Item = (&str, u32)>> {
        self.postings
            .get(term)
            .map(|list| list.iter().map(|&(doc, tf)| (self.doc_refs[doc as usize].as_str(), tf)))
    }
}

/// Build a lexical index over `(doc ref, text)` pairs for one scope.
/// Doc refs must be unique.
pub fn build_lexical(
    docs: &[(String, String)],
    scope: Scope,
) -> Result<LexicalIndex, IndexError> {
    let mut seen: HashMap<&str, ()> = HashMap::with_capacity(docs.len());
    for (doc_ref, _) in docs {
        if seen.insert(doc_ref, ()).is_some() {
            return Err(IndexError::DuplicateDocRef(doc_ref.clone()));
        }
    }

    let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
    let mut doc_refs = Vec::with_capacity(docs.len());
    let mut doc_lengths = Vec::with_capacity(docs.len());
    let mut total_len: u64 = 0;

    for (i, (doc_ref, text)) in docs.iter().enumerate() {
        let tokens = tokenize(text);
        let mut counts: HashMap<String, u32> = HashMap::new();
        for t in &tokens {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
        for (term, tf) in counts {
            postings.entry(term).or_default().push((i as u32, tf));
        }
        total_len += tokens.len() as u64;
        doc_refs.push(doc_ref.clone());
        doc_lengths.push(tokens.len() as u32);
    }

    // keep postings lists in doc_ref order for determinism across runs
    let order: Vec<usize> = {
        let mut idx: Vec<usize> = (0..doc_refs.len()).collect();
        idx.sort_by(|&a, &b| doc_refs[a].cmp(&doc_refs[b]));
        let mut rank = vec![0usize; doc_refs.len()];
        for (r, &i) in idx.iter().enumerate() {
            rank[i] = r;
        }
        rank
    };
    for list in postings.values_mut() {
        list.sort_by_key(|&(doc, _)| order[doc as usize]);
    }

    let avg_doc_length = if doc_refs.is_empty() {
        0.0
    } else {
        total_len as f64 / doc_refs.len() as f64
    };

    Ok(LexicalIndex { scope, postings, doc_refs, doc_lengths, avg_doc_length })
}

/// BM25 inverse document frequency: ln(1 + (N - n_t + 0.5) / (n_t + 0.5)).
pub fn idf(doc_count: usize, term_doc_count: usize) -> f64 {
    let n = doc_count as f64;
    let n_t = term_doc_count as f64;
    (1.0 + (n - n_t + 0.5) / (n_t + 0.5)).ln()
}

/// Top-`k` documents for `query` under BM25 with k1=1.2, b=0.75. Query
/// terms are deduplicated; an empty or unmatched query yields no hits.
pub fn bm25_search(index: &LexicalIndex, query: &str, k: usize) -> Vec<RankedHit> {
    let mut terms = tokenize(query);
    terms.sort();
    terms.dedup();

    // dense accumulators: common terms can touch most of the corpus
    let mut scores = vec![0.0f64; index.doc_refs.len()];
    let mut matched = vec![false; index.doc_refs.len()];
    for term in &terms {
        let Some(list) = index.postings.get(term) else { continue };
        let term_idf = idf(index.doc_count(), list.len());
        for &(doc, tf) in list {
            let len = index.doc_lengths[doc as usize] as f64;
            let tf = tf as f64;
            let norm = BM25_K1 * (1.0 - BM25_B + BM25_B * len / index.avg_doc_length);
            let contribution = term_idf * tf * (BM25_K1 + 1.0) / (tf + norm);
            scores[doc as usize] += contribution;
            matched[doc as usize] = true;
        }
    }

    let channel = match index.scope {
        Scope::Blob => Channel::LexicalBlob,
        Scope::Section => Channel::LexicalSection,
        Scope::Symbol => Channel::LexicalSymbol,
    };
    let mut scored: Vec<(u32, f64)> = (0..index.doc_refs.len() as u32)
        .filter(|&doc| matched[doc as usize])
        .map(|doc| (doc, scores[doc as usize]))
        .collect();
    // canonical order without cloning doc refs for the whole corpus
    scored.sort_unstable_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| index.doc_refs[a.0 as usize].cmp(&index.doc_refs[b.0 as usize]))
    });
    scored.truncate(k);
    scored
        .into_iter()
        .map(|(doc, score)| RankedHit {
            doc_ref: index.doc_refs[doc as usize].clone(),
            score,
            source_channel: channel,
        })
        .collect()
}
