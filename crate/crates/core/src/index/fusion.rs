//! Reciprocal rank fusion over multiple ranked lists.

use std::collections::HashMap;

use super::{rank_and_truncate, Channel, RankedHit};

/// Standard RRF smoothing constant.
pub const RRF_CONSTANT: f64 = 60.0;

fn channel_order(c: Channel) -> u8 {
    match c {
        Channel::LexicalBlob => 0,
        Channel::LexicalSection => 1,
        Channel::LexicalSymbol => 2,
        Channel::Vector => 3,
        Channel::Insight => 4,
    }
}

/// Fuse ranked lists: fused score of a doc is the sum over lists that
/// contain it of 1/(60 + rank), rank starting at 1. The output obeys the
/// canonical total order and is invariant under permutation of the input
/// lists. Channel weighting is done by injecting a list more than once.
///
/// Each fused hit keeps the channel of its best-ranked occurrence (ties
/// broken by a fixed channel order, so permutations cannot change it).
pub fn fuse(rankings: &[Vec<RankedHit>], k: usize) -> Vec<RankedHit> {
    let mut acc: HashMap<&str, (Vec<usize>, usize, Channel)> = HashMap::new();
    for list in rankings {
        for (i, hit) in list.iter().enumerate() {
            let rank = i + 1;
            let entry = acc
                .entry(hit.doc_ref.as_str())
                .or_insert((Vec::new(), usize::MAX, hit.source_channel));
            entry.0.push(rank);
            if rank < entry.1
                || (rank == entry.1
                    && channel_order(hit.source_channel) < channel_order(entry.2))
            {
                entry.1 = rank;
                entry.2 = hit.source_channel;
            }
        }
    }
    let hits = acc
        .into_iter()
        .map(|(doc_ref, (mut ranks, _, channel))| {
            // sum in sorted rank order so the score is bit-identical under
            // any permutation of the input lists
            ranks.sort_unstable();
            let score =
                ranks.iter().map(|&r| 1.0 / (RRF_CONSTANT + r as f64)).sum();
            RankedHit { doc_ref: doc_ref.to_string(), score, source_channel: channel }
        })
        .collect();
    rank_and_truncate(hits, k)
}
