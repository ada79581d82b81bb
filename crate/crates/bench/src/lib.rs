//! Shared corpus generation for the benchmarks.

use std::collections::BTreeMap;

use spark_core::store::DocBlobCandidate;

/// Deterministic synthetic documentation corpus: `n` blobs across a few
/// sources with API-identifier-rich bodies, sized like short doc pages.
pub fn synthetic_corpus(n: usize) -> Vec<DocBlobCandidate> {
    const SOURCES: [&str; 4] = ["pandas", "numpy", "requests", "sklearn"];
    const TOPICS: [&str; 8] = [
        "groupby", "indexing", "timeseries", "io", "merge", "window", "dtype", "plotting",
    ];
    (0..n)
        .map(|i| {
            let source = SOURCES[i % SOURCES.len()];
            let topic = TOPICS[(i / SOURCES.len()) % TOPICS.len()];
            let body = format!(
                "{source} {topic} guide {i}. Use {source}_{topic}_fn_{i} to process data; \
                 it accepts axis and level arguments. Combine with to_{topic}_{i} when \
                 converting between representations. Common pitfalls: mismatched dtypes, \
                 implicit copies, and chained assignment. See also helper_{} and \
                 util_{}.",
                i % 97,
                i % 53
            );
            DocBlobCandidate {
                source: source.to_string(),
                path: format!("{topic}/page_{i}.md"),
                title: format!("{topic} page {i}"),
                body,
                symbols: vec![format!("{source}_{topic}_fn_{i}")],
                metadata: BTreeMap::new(),
            }
        })
        .collect()
}
