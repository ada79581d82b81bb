//! Acceptance suite: nine end-to-end criteria, each printing one
//! PASS/FAIL line. Run with `cargo test --test acceptance -- --nocapture`
//! to see the lines on success; any failure fails the single test.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use chrono::{TimeZone, Utc};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::{json, Value};

use spark_core::config::Config;
use spark_core::evalkit::{
    aggregate_helpfulness, aggregate_quality, Band, BandRecord, Condition, ScoreRecord, BANDS,
};
use spark_core::gateway::Gateway;
use spark_core::index::{
    build_lexical, bm25_search, dot, fuse, Channel, RankedHit, Scope, VectorIndex,
};
use spark_core::learning::{CandidateInsight, FeedbackEvent};
use spark_core::server::{serve_http, serve_stdio};
use spark_core::store::{DocBlobCandidate, Outcome, Store};
use spark_core::tokenize::tokenize;
use spark_core::SparkService;

#[test]
fn acceptance() {
    let criteria: Vec<(&str, fn())> = vec![
        ("1 quality score table reproduces published per-model means", criterion_1),
        ("2 helpfulness band shares reproduce published percentages", criterion_2),
        ("3 bm25/knn/fusion match brute-force oracles over 500 trials", criterion_3),
        ("4 greedy clustering matches components oracle over 200 trials", criterion_4),
        ("5 full pipeline is deterministic across two fresh replays", criterion_5),
        ("6 epoch learning changes recommendations for seeded hindsight", criterion_6),
        ("7 1000 randomized rpc envelopes agree across both transports", criterion_7),
        ("8 store state survives restart after every pipeline stage", criterion_8),
        ("9 p99 recommendation latency under 250ms at 34k blobs", criterion_9),
    ];
    let mut failures = Vec::new();
    for (label, run) in criteria {
        match std::panic::catch_unwind(run) {
            Ok(()) => println!("PASS criterion {label}"),
            Err(err) => {
                let msg = err
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| err.downcast_ref::<&str>().copied())
                    .unwrap_or("panic");
                println!("FAIL criterion {label}: {msg}");
                failures.push(label);
            }
        }
    }
    assert!(failures.is_empty(), "failed criteria: {failures:?}");
}

// --- shared helpers -------------------------------------------------------

fn test_config(root: &Path) -> Config {
    let mut config = Config::default();
    config.store.root = root.to_path_buf();
    config
}

fn service_at(root: &Path) -> Arc<SparkService> {
    let store = Arc::new(Store::open(root).unwrap());
    let gateway = Arc::new(Gateway::stub());
    Arc::new(SparkService::with_parts(store, gateway, &test_config(root)).unwrap())
}

fn blob(source: &str, path: &str, body: &str, symbols: &[&str]) -> DocBlobCandidate {
    DocBlobCandidate {
        source: source.into(),
        path: path.into(),
        title: path.rsplit('/').next().unwrap_or(path).into(),
        body: body.into(),
        symbols: symbols.iter().map(|s| s.to_string()).collect(),
        metadata: BTreeMap::new(),
    }
}

/// Deterministic corpus used by the replay and differential criteria.
fn seeded_corpus(n: usize) -> Vec<DocBlobCandidate> {
    let sources = ["pandas", "numpy", "requests", "sqlalchemy"];
    let topics = [
        ("timeseries/tz.md", "tz_localize attaches a timezone to naive timestamps and tz_convert moves aware timestamps between zones"),
        ("groupby/agg.md", "groupby agg applies named aggregations over grouped frames and named_agg controls output columns"),
        ("io/csv.md", "read_csv parses delimited text and to_csv writes frames with configurable separators"),
        ("indexing/loc.md", "loc selects rows by label while iloc selects by position and boolean masks filter rows"),
        ("merge/join.md", "merge joins frames on key columns and validate checks merge cardinality"),
    ];
    (0..n)
        .map(|i| {
            let source = sources[i % sources.len()];
            let (path, body) = topics[i % topics.len()];
            blob(
                source,
                &format!("v{}/{}", i / topics.len(), path),
                &format!("{body} variant_fn_{i} explains usage in release {i}"),
                &[&format!("variant_fn_{i}")],
            )
        })
        .collect()
}

/// Strip fields that legitimately differ between runs: fresh UUIDs and
/// wall-clock timestamps, plus everything derived from them (trace ids
/// feed insight and cluster ids), and the in-process index version.
fn mask(value: &mut Value) {
    const VOLATILE: &[&str] = &[
        "recommendation_id",
        "created_at",
        "committed_at",
        "timestamp",
        "trace_id",
        "trace_ids",
        "supporting_trace_ids",
        "insight_id",
        "cluster_id",
        "superseded_by",
        "index_version",
    ];
    match value {
        Value::Object(map) => {
            for (key, v) in map.iter_mut() {
                if VOLATILE.contains(&key.as_str()) {
                    *v = Value::String("***".into());
                } else {
                    mask(v);
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(mask),
        _ => {}
    }
}

fn masked(value: Value) -> Value {
    let mut value = value;
    mask(&mut value);
    value
}

// --- criterion 1 & 2: published evaluation tables -------------------------

fn criterion_1() {
    let cases: [(&str, Condition, [u64; 5], &str); 7] = [
        ("human", Condition::HumanReference, [31, 129, 72, 63, 705], "4.28"),
        ("qwen3-coder", Condition::NoSpark, [47, 133, 74, 39, 707], "4.23"),
        ("qwen3-coder", Condition::WithSpark, [7, 18, 5, 17, 953], "4.89"),
        ("haiku", Condition::NoSpark, [13, 97, 57, 32, 773], "4.50"),
        ("haiku", Condition::WithSpark, [4, 12, 10, 23, 951], "4.91"),
        ("gpt-5-codex", Condition::NoSpark, [5, 35, 31, 32, 897], "4.78"),
        ("gpt-5-codex", Condition::WithSpark, [6, 18, 34, 23, 919], "4.83"),
    ];
    let mut records = Vec::new();
    for (model, condition, histogram, _) in &cases {
        for (i, n) in histogram.iter().enumerate() {
            for j in 0..*n {
                records.push(ScoreRecord {
                    problem_id: format!("p-{i}-{j}"),
                    condition: *condition,
                    model_tag: model.to_string(),
                    score: i as u8 + 1,
                    rationale: None,
                });
            }
        }
    }
    let report = aggregate_quality(&records).unwrap();
    for (model, condition, histogram, display) in &cases {
        let row = report
            .rows
            .iter()
            .find(|r| r.model_tag == *model && r.condition == *condition)
            .unwrap_or_else(|| panic!("missing row {model} {condition:?}"));
        assert_eq!(&row.histogram, histogram, "{model} {condition:?} histogram");
        assert_eq!(row.mean_display, *display, "{model} {condition:?} mean");
        assert_eq!(row.count, histogram.iter().sum::<u64>());
    }
}

fn criterion_2() {
    let counts: [u64; 5] = [761, 221, 15, 2, 1];
    let mut records = Vec::new();
    for (band, n) in BANDS.iter().zip(counts) {
        for j in 0..n {
            records.push(BandRecord {
                problem_id: format!("{}-{j}", band.name()),
                band: *band,
                rationale: None,
            });
        }
    }
    let report = aggregate_helpfulness(&records).unwrap();
    assert_eq!(report.total, 1000);
    assert_eq!(report.top_band_share_display, "76.1%");
    assert_eq!(report.top_two_share_display, "98.2%");
    assert_eq!(report.counts[Band::ExtremelyHelpful.name()], 761);
}

// --- criterion 3: retrieval oracles ---------------------------------------

const SCORE_TOLERANCE: f64 = 1e-9;

fn canonical_order(hits: &mut [(String, f64)]) {
    hits.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0))
    });
}

fn oracle_bm25(docs: &[(String, String)], query: &str, k: usize) -> Vec<(String, f64)> {
    let token_lists: Vec<Vec<String>> = docs.iter().map(|(_, text)| tokenize(text)).collect();
    let n = docs.len() as f64;
    let avg_len = if docs.is_empty() {
        0.0
    } else {
        token_lists.iter().map(|t| t.len() as f64).sum::<f64>() / n
    };
    let mut terms = tokenize(query);
    terms.sort();
    terms.dedup();
    let mut hits = Vec::new();
    for (i, (doc_ref, _)) in docs.iter().enumerate() {
        let mut score = 0.0;
        for term in &terms {
            let tf = token_lists[i].iter().filter(|t| *t == term).count() as f64;
            if tf == 0.0 {
                continue;
            }
            let n_t = token_lists.iter().filter(|list| list.iter().any(|t| t == term)).count()
                as f64;
            let idf = (1.0 + (n - n_t + 0.5) / (n_t + 0.5)).ln();
            let len = token_lists[i].len() as f64;
            let norm = 1.2 * (1.0 - 0.75 + 0.75 * len / avg_len);
            score += idf * tf * 2.2 / (tf + norm);
        }
        if score > 0.0 {
            hits.push((doc_ref.clone(), score));
        }
    }
    canonical_order(&mut hits);
    hits.truncate(k);
    hits
}

fn oracle_knn(entries: &[(String, Vec<f32>)], query: &[f32], k: usize) -> Vec<(String, f64)> {
    let mut hits: Vec<(String, f64)> = entries
        .iter()
        .map(|(doc_ref, v)| {
            let score: f64 = v.iter().zip(query).map(|(a, b)| *a as f64 * *b as f64).sum();
            (doc_ref.clone(), score)
        })
        .collect();
    canonical_order(&mut hits);
    hits.truncate(k);
    hits
}

fn oracle_rrf(rankings: &[Vec<RankedHit>], k: usize) -> Vec<(String, f64)> {
    // collect each doc's ranks and sum in ascending rank order, mirroring
    // the implementation's permutation-invariant summation
    let mut ranks: HashMap<String, Vec<usize>> = HashMap::new();
    for list in rankings {
        for (i, hit) in list.iter().enumerate() {
            ranks.entry(hit.doc_ref.clone()).or_default().push(i + 1);
        }
    }
    let mut hits: Vec<(String, f64)> = ranks
        .into_iter()
        .map(|(doc_ref, mut rs)| {
            rs.sort_unstable();
            (doc_ref, rs.iter().map(|&r| 1.0 / (60.0 + r as f64)).sum())
        })
        .collect();
    canonical_order(&mut hits);
    hits.truncate(k);
    hits
}

fn assert_hits_match(actual: &[RankedHit], expected: &[(String, f64)], what: &str, trial: u64) {
    assert_eq!(actual.len(), expected.len(), "{what} trial {trial}: result count");
    for (a, (doc_ref, score)) in actual.iter().zip(expected) {
        assert_eq!(&a.doc_ref, doc_ref, "{what} trial {trial}: order");
        assert!(
            (a.score - score).abs() <= SCORE_TOLERANCE,
            "{what} trial {trial}: score {} vs oracle {score}",
            a.score
        );
    }
}

fn random_unit(rng: &mut StdRng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.iter().map(|x| (x / norm) as f32).collect();
        }
    }
}

fn criterion_3() {
    let vocab: Vec<String> = (0..24)
        .map(|i| if i % 5 == 0 { format!("lib_fn_{i}") } else { format!("term{i}") })
        .collect();
    for trial in 0..500u64 {
        let mut rng = StdRng::seed_from_u64(0x5041_524b + trial);
        let k = rng.gen_range(1..=10);

        // bm25 against a brute-force per-document scan
        let n_docs = rng.gen_range(2..=25);
        let docs: Vec<(String, String)> = (0..n_docs)
            .map(|i| {
                let len = rng.gen_range(3..=40);
                let text: Vec<&str> =
                    (0..len).map(|_| vocab[rng.gen_range(0..vocab.len())].as_str()).collect();
                (format!("doc-{i:03}"), text.join(" "))
            })
            .collect();
        let query: Vec<&str> = (0..rng.gen_range(1..=5))
            .map(|_| vocab[rng.gen_range(0..vocab.len())].as_str())
            .collect();
        let query = query.join(" ");
        let index = build_lexical(&docs, Scope::Blob).unwrap();
        assert_hits_match(&bm25_search(&index, &query, k), &oracle_bm25(&docs, &query, k), "bm25", trial);

        // knn against a full linear scan re-sort
        let dim = 16;
        let entries: Vec<(String, Vec<f32>)> = (0..rng.gen_range(1..=30))
            .map(|i| (format!("vec-{i:03}"), random_unit(&mut rng, dim)))
            .collect();
        let mut vectors = VectorIndex::new(dim);
        for (doc_ref, v) in &entries {
            vectors.insert(doc_ref.clone(), v.clone()).unwrap();
        }
        let query_vec = random_unit(&mut rng, dim);
        assert_hits_match(
            &vectors.knn_search(&query_vec, k).unwrap(),
            &oracle_knn(&entries, &query_vec, k),
            "knn",
            trial,
        );

        // reciprocal rank fusion against a direct recomputation
        let pool: Vec<String> = (0..rng.gen_range(1..=15)).map(|i| format!("d{i:02}")).collect();
        let rankings: Vec<Vec<RankedHit>> = (0..rng.gen_range(1..=4))
            .map(|_| {
                let mut members: Vec<&String> = pool.iter().collect();
                for i in (1..members.len()).rev() {
                    members.swap(i, rng.gen_range(0..=i));
                }
                members.truncate(rng.gen_range(0..=pool.len()));
                members
                    .into_iter()
                    .enumerate()
                    .map(|(rank, doc_ref)| RankedHit {
                        doc_ref: doc_ref.clone(),
                        score: 1.0 / (rank + 1) as f64,
                        source_channel: Channel::LexicalBlob,
                    })
                    .collect()
            })
            .collect();
        assert_hits_match(&fuse(&rankings, k), &oracle_rrf(&rankings, k), "fusion", trial);
    }
}

// --- criterion 4: clustering oracle ---------------------------------------

/// Connected components of the graph joining candidates whose pairwise
/// cosine similarity is at or above the clustering threshold.
fn oracle_components(embeddings: &[Vec<f32>], threshold: f64) -> Vec<HashSet<usize>> {
    let n = embeddings.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for i in 0..n {
        for j in i + 1..n {
            if dot(&embeddings[i], &embeddings[j]) >= threshold {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut groups: HashMap<usize, HashSet<usize>> = HashMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().insert(i);
    }
    groups.into_values().collect()
}

fn criterion_4() {
    let dir = tempfile::tempdir().unwrap();
    let service = service_at(dir.path());
    let dim = 16;
    for trial in 0..200u64 {
        let mut rng = StdRng::seed_from_u64(0xc1a5 + trial);
        let n_groups = rng.gen_range(1..=4);
        let mut embeddings: Vec<Vec<f32>> = Vec::new();
        let mut candidates: Vec<CandidateInsight> = Vec::new();
        for g in 0..n_groups {
            for m in 0..rng.gen_range(1..=4) {
                // group centers are orthogonal axes; members sit in a tight
                // cone around their center, far from every other group
                let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-0.05..0.05)).collect();
                v[g] += 1.0;
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                let unit: Vec<f32> = v.iter().map(|x| (x / norm) as f32).collect();
                embeddings.push(unit.clone());
                candidates.push(CandidateInsight {
                    lesson_text: format!("lesson {trial:03} group {g} member {m}"),
                    supporting_trace_ids: vec![format!("tr-{trial:03}-{g}-{m}")],
                    novelty: 1.0,
                    embedding: Some(unit),
                });
            }
        }
        // the comparison is only meaningful when every pairwise similarity
        // clears the threshold by a margin on one side or the other
        for i in 0..embeddings.len() {
            for j in i + 1..embeddings.len() {
                let sim = dot(&embeddings[i], &embeddings[j]);
                assert!(
                    !(0.70..0.90).contains(&sim),
                    "trial {trial}: pair similarity {sim} inside the margin band"
                );
            }
        }
        let clusters = service.learning().cluster_candidates(&candidates).unwrap();
        let index_of: HashMap<&str, usize> = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (c.lesson_text.as_str(), i))
            .collect();
        let mut actual: Vec<HashSet<usize>> = clusters
            .iter()
            .map(|c| {
                c.member_candidates.iter().map(|m| index_of[m.lesson_text.as_str()]).collect()
            })
            .collect();
        let mut expected = oracle_components(&embeddings, 0.80);
        let key = |s: &HashSet<usize>| *s.iter().min().unwrap();
        actual.sort_by_key(key);
        expected.sort_by_key(key);
        assert_eq!(actual, expected, "trial {trial}: partition differs from oracle");
    }
}

// --- criterion 5: end-to-end replay determinism ---------------------------

/// One full pipeline run in a fresh store; returns the masked transcript.
fn pipeline_transcript(root: &Path) -> Value {
    let service = service_at(root);
    let mut transcript = Vec::new();

    let report = service.store().put_doc_blobs(seeded_corpus(100)).unwrap();
    transcript.push(serde_json::to_value(&report).unwrap());

    let problems = [
        "how do I use tz_localize on a naive timestamp index",
        "groupby agg named aggregation renames output columns",
        "read_csv fails on a semicolon separated file",
    ];
    let mut rec_ids = Vec::new();
    for problem in problems {
        let rec = service.retrieval().recommend(problem, "df = pd.DataFrame()").unwrap();
        rec_ids.push(rec.recommendation_id.clone());
        transcript.push(serde_json::to_value(&rec).unwrap());
    }

    let hindsight = [
        "use tz_convert for aware timestamps instead of tz_localize",
        "groupby agg named aggregation renames output columns only with named_agg tuples",
        "read_csv fails on a semicolon separated file unless the sep argument is set",
    ];
    for i in 0..20u32 {
        let event = FeedbackEvent {
            recommendation_id: rec_ids[i as usize % rec_ids.len()].clone(),
            outcome: if i % 3 == 0 { Outcome::Accepted } else { Outcome::Rejected },
            hindsight_feedback: if i % 3 == 0 {
                None
            } else {
                Some(hindsight[i as usize % hindsight.len()].to_string())
            },
            agent_tag: format!("agent-{}", i % 4),
            timestamp: Utc.timestamp_opt(1_700_000_000 + i as i64, 0).unwrap(),
        };
        service.learning().record_feedback(&event).unwrap();
    }

    let report = service.learning().run_epoch().unwrap();
    transcript.push(serde_json::to_value(&report).unwrap());

    for problem in problems {
        let rec = service.retrieval().recommend(problem, "").unwrap();
        transcript.push(serde_json::to_value(&rec).unwrap());
    }
    transcript.push(serde_json::to_value(service.store().stats()).unwrap());
    masked(Value::Array(transcript))
}

fn criterion_5() {
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = pipeline_transcript(dir_a.path());
    let b = pipeline_transcript(dir_b.path());
    let a = serde_json::to_string_pretty(&a).unwrap();
    let b = serde_json::to_string_pretty(&b).unwrap();
    if a != b {
        let diverge = a
            .lines()
            .zip(b.lines())
            .enumerate()
            .find(|(_, (x, y))| x != y)
            .map(|(i, (x, y))| format!("line {i}: {x:?} vs {y:?}"))
            .unwrap_or_else(|| "transcripts differ in length".into());
        panic!("replay transcripts differ after masking volatile ids; first divergence {diverge}");
    }
    // the run did real work: insights were committed and cited
    if !a.contains("Lessons from experience") {
        std::fs::write("/tmp/transcript.json", &a).unwrap();
        panic!("post-epoch guidance cites no lessons (transcript at /tmp/transcript.json)");
    }
}

// --- criterion 6: two-epoch differential ----------------------------------

fn criterion_6() {
    let dir = tempfile::tempdir().unwrap();
    let service = service_at(dir.path());
    service.store().put_doc_blobs(seeded_corpus(20)).unwrap();

    let problem = "convert tz aware timestamps with tz_convert after tz_localize";
    let lesson = "call tz_convert on aware timestamps; tz_localize only attaches a zone";

    let before = service.retrieval().recommend(problem, "").unwrap();
    assert_eq!(before.epoch_number, 0);
    assert!(
        !before.guidance_text.contains(lesson),
        "seeded lesson visible before any epoch ran"
    );

    service
        .learning()
        .record_feedback(&FeedbackEvent {
            recommendation_id: before.recommendation_id.clone(),
            outcome: Outcome::Rejected,
            hindsight_feedback: Some(lesson.to_string()),
            agent_tag: "agent-a".into(),
            timestamp: Utc.timestamp_opt(1_700_000_000, 0).unwrap(),
        })
        .unwrap();
    let report = service.learning().run_epoch().unwrap();
    assert_eq!(report.epoch_number, 1);
    assert_eq!(report.insights_committed, 1);

    let after = service.retrieval().recommend(problem, "").unwrap();
    assert_eq!(after.epoch_number, 1);
    assert!(after.guidance_text.contains(lesson), "learned lesson missing from guidance");
    assert!(
        after.best_practices.iter().any(|p| p.contains(lesson)),
        "learned lesson missing from best practices"
    );

    // pinning to epoch 0 still reproduces the pre-learning behavior
    let pinned = service.retrieval().recommend_at_epoch(problem, "", Some(0)).unwrap();
    assert!(!pinned.guidance_text.contains(lesson));
}

// --- criterion 7: randomized rpc envelopes over both transports -----------

fn random_envelope(rng: &mut StdRng, i: usize) -> String {
    let problems = [
        "tz_localize on a datetime index",
        "groupby agg output column names",
        "read_csv separator options",
        "merge validate one_to_one",
    ];
    match rng.gen_range(0..12) {
        0 => json!({"jsonrpc": "2.0", "id": i, "method": "tools/list"}).to_string(),
        1 => json!({"jsonrpc": "2.0", "id": i, "method": "memory_stats"}).to_string(),
        2 | 3 => json!({
            "jsonrpc": "2.0", "id": i, "method": "get_recommendation",
            "params": {"problem": problems[rng.gen_range(0..problems.len())]}
        })
        .to_string(),
        4 => json!({
            "jsonrpc": "2.0", "id": format!("req-{i}"), "method": "get_recommendation",
            "params": {
                "problem": problems[rng.gen_range(0..problems.len())],
                "code_context": "df = pd.DataFrame()"
            }
        })
        .to_string(),
        5 => json!({
            "jsonrpc": "2.0", "id": i, "method": "ingest_documentation",
            "params": {"blobs": [{
                "source": "extra",
                "path": format!("notes/{}.md", rng.gen_range(0..50)),
                "body": "short note about split_fn_usage in production"
            }]}
        })
        .to_string(),
        6 => json!({
            "jsonrpc": "2.0", "id": i, "method": "submit_feedback",
            "params": {"recommendation_id": "rec-missing", "outcome": "accepted"}
        })
        .to_string(),
        // malformed shapes, unknown methods, and raw non-json bodies
        7 => json!({"jsonrpc": "1.0", "id": i, "method": "memory_stats"}).to_string(),
        8 => json!({"jsonrpc": "2.0", "id": i, "method": "trigger_epoch"}).to_string(),
        9 => json!({"jsonrpc": "2.0", "id": i, "method": "get_recommendation", "params": {}})
            .to_string(),
        10 => json!([1, 2, 3]).to_string(),
        _ => format!("not json at all {i}"),
    }
}

fn check_conformance(body: &str, i: usize) {
    let v: Value =
        serde_json::from_str(body).unwrap_or_else(|_| panic!("envelope {i}: non-json response"));
    let obj = v.as_object().unwrap_or_else(|| panic!("envelope {i}: response not an object"));
    assert_eq!(obj.get("jsonrpc"), Some(&json!("2.0")), "envelope {i}: jsonrpc tag");
    assert!(obj.contains_key("id"), "envelope {i}: missing id");
    let has_result = obj.contains_key("result");
    let has_error = obj.contains_key("error");
    assert!(has_result ^ has_error, "envelope {i}: must have exactly one of result/error");
    if has_error {
        let code = v["error"]["code"].as_i64().unwrap();
        assert!(
            [-32700, -32600, -32601, -32602, -32000, -32004, -32010, -32050].contains(&code),
            "envelope {i}: unexpected error code {code}"
        );
    }
}

fn criterion_7() {
    // two identical services so that state mutations (ingest) cannot make
    // one transport's later responses diverge from the other's
    let dir_stdio = tempfile::tempdir().unwrap();
    let dir_http = tempfile::tempdir().unwrap();
    for dir in [&dir_stdio, &dir_http] {
        let service = service_at(dir.path());
        service.store().put_doc_blobs(seeded_corpus(20)).unwrap();
        drop(service);
    }
    let stdio_service = service_at(dir_stdio.path());
    let http_service = service_at(dir_http.path());

    let mut rng = StdRng::seed_from_u64(0x7007);
    let envelopes: Vec<String> = (0..1000).map(|i| random_envelope(&mut rng, i)).collect();

    let input = envelopes.join("\n") + "\n";
    let mut out: Vec<u8> = Vec::new();
    serve_stdio(&stdio_service, input.as_bytes(), &mut out).unwrap();
    let stdio_lines: Vec<String> =
        String::from_utf8(out).unwrap().lines().map(str::to_string).collect();
    assert_eq!(stdio_lines.len(), envelopes.len());

    let handle = serve_http(http_service, 0).unwrap();
    let url = format!("http://127.0.0.1:{}/rpc", handle.port());
    let agent = ureq::AgentBuilder::new().build();
    let mut http_bodies = Vec::with_capacity(envelopes.len());
    for envelope in &envelopes {
        let response = agent.post(&url).set("Content-Type", "application/json").send_string(envelope);
        let body = match response {
            Ok(r) => r.into_string().unwrap(),
            Err(ureq::Error::Status(_, r)) => r.into_string().unwrap(),
            Err(e) => panic!("http transport error: {e}"),
        };
        http_bodies.push(body);
    }
    handle.shutdown();

    for (i, (line, body)) in stdio_lines.iter().zip(&http_bodies).enumerate() {
        check_conformance(line, i);
        check_conformance(body, i);
        let a = masked(serde_json::from_str(line).unwrap());
        let b = masked(serde_json::from_str(body).unwrap());
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap(),
            "envelope {i}: transports disagree\nrequest: {}",
            envelopes[i]
        );
    }
    // sanity: the masked comparison still exercised real successes
    let successes = stdio_lines.iter().filter(|l| l.contains("\"result\"")).count();
    assert!(successes > 400, "too few successful calls: {successes}");
    let parse_errors = stdio_lines.iter().filter(|l| l.contains("-32700")).count();
    assert!(parse_errors > 0, "no parse-error envelopes were exercised");
    let ingests = stdio_lines.iter().filter(|l| l.contains("\"inserted\"")).count();
    assert!(ingests > 0, "no successful ingest envelopes were exercised");
}

// --- criterion 8: restart durability --------------------------------------

/// Snapshot of everything the store should preserve across a restart.
fn persisted_state(store: &Store) -> Value {
    let epochs = store.epochs();
    let snapshots: Vec<Value> = epochs
        .iter()
        .map(|e| {
            let snap = store.load_snapshot(Some(e.epoch_number)).unwrap();
            json!({
                "epoch_number": snap.epoch_number,
                "committed_at": snap.committed_at,
                "doc_corpus_version": snap.doc_corpus_version,
                "insights": snap.insights.as_slice(),
                "stats": snap.stats,
            })
        })
        .collect();
    json!({
        "stats": store.stats(),
        "doc_corpus_version": store.doc_corpus_version(),
        "epochs": epochs,
        "snapshots": snapshots,
        "traces": store.scan_traces(0),
        "insights": store.all_insights(),
        "trace_high_water": store.trace_high_water(),
    })
}

fn criterion_8() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();

    let stages: Vec<(&str, Box<dyn Fn(&SparkService)>)> = vec![
        ("ingest", Box::new(|s: &SparkService| {
            s.store().put_doc_blobs(seeded_corpus(30)).unwrap();
        })),
        ("recommend", Box::new(|s: &SparkService| {
            s.retrieval().recommend("tz_localize on naive timestamps", "").unwrap();
        })),
        ("feedback", Box::new(|s: &SparkService| {
            let rec = s.retrieval().recommend("groupby agg column names", "").unwrap();
            s.learning()
                .record_feedback(&FeedbackEvent {
                    recommendation_id: rec.recommendation_id,
                    outcome: Outcome::Rejected,
                    hindsight_feedback: Some("pass named_agg tuples to agg".into()),
                    agent_tag: "agent-a".into(),
                    timestamp: Utc.timestamp_opt(1_700_000_000, 0).unwrap(),
                })
                .unwrap();
        })),
        ("epoch", Box::new(|s: &SparkService| {
            s.learning().run_epoch().unwrap();
        })),
        ("post-epoch recommend + feedback", Box::new(|s: &SparkService| {
            let rec = s.retrieval().recommend("groupby agg column names", "").unwrap();
            s.learning()
                .record_feedback(&FeedbackEvent {
                    recommendation_id: rec.recommendation_id,
                    outcome: Outcome::PartiallyUseful,
                    hindsight_feedback: Some("agg accepts a dict of column to function".into()),
                    agent_tag: "agent-b".into(),
                    timestamp: Utc.timestamp_opt(1_700_000_100, 0).unwrap(),
                })
                .unwrap();
        })),
        ("second epoch", Box::new(|s: &SparkService| {
            s.learning().run_epoch().unwrap();
        })),
    ];

    for (name, stage) in stages {
        // run the stage, capture state, then drop every handle (the
        // in-process stand-in for killing the process) and reopen cold
        let before = {
            let service = service_at(root);
            stage(&service);
            persisted_state(service.store())
        };
        let reopened = Store::open(root).unwrap();
        let after = persisted_state(&reopened);
        assert_eq!(
            serde_json::to_string(&before).unwrap(),
            serde_json::to_string(&after).unwrap(),
            "state diverged after restart following stage '{name}'"
        );
    }

    let store = Store::open(root).unwrap();
    assert_eq!(store.epochs().len(), 3, "expected epochs 0..=2 after final restart");
    assert!(store.load_snapshot(Some(2)).unwrap().insights.len() >= 1);
}

// --- criterion 9: latency at scale ----------------------------------------

fn criterion_9() {
    let dir = tempfile::tempdir().unwrap();
    let service = service_at(dir.path());

    let sources = ["pandas", "numpy", "requests", "sqlalchemy"];
    let topics = ["frame", "series", "index", "merge", "window", "string", "datetime", "io"];
    let corpus: Vec<DocBlobCandidate> = (0..34_000)
        .map(|i| {
            let source = sources[i % sources.len()];
            let topic = topics[(i / sources.len()) % topics.len()];
            blob(
                source,
                &format!("{topic}/page_{i:05}.md"),
                &format!(
                    "{source} {topic} reference for {source}_{topic}_fn_{i}: call \
                     {source}_{topic}_fn_{i} with keyword arguments to transform the {topic}; \
                     it validates inputs, handles missing values, and returns a new {topic} \
                     without mutating the original"
                ),
                &[&format!("{source}_{topic}_fn_{i}")],
            )
        })
        .collect();
    let report = service.store().put_doc_blobs(corpus).unwrap();
    assert_eq!(report.inserted, 34_000);

    // index construction is ingest-time work, excluded from query latency
    service.retrieval().refresh_indexes().unwrap();

    let mut durations = Vec::with_capacity(1000);
    for i in 0..1000usize {
        let source = sources[i % sources.len()];
        let topic = topics[i % topics.len()];
        let problem = format!(
            "how do I call {source}_{topic}_fn_{} to transform a {topic} without mutating it",
            i * 29 % 34_000
        );
        let start = Instant::now();
        let rec = service.retrieval().recommend(&problem, "").unwrap();
        durations.push(start.elapsed());
        assert!(!rec.citations.is_empty(), "query {i} returned no citations");
    }
    durations.sort();
    let p99 = durations[989];
    let p50 = durations[499];
    println!("  scale: p50 {p50:?}, p99 {p99:?} over 1000 recommendations");
    assert!(
        p99.as_millis() < 250,
        "p99 recommendation latency {p99:?} exceeds 250ms"
    );
}
