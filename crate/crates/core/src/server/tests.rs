use std::io::Cursor;
use std::sync::Arc;

use serde_json::{json, Value};

use super::tools::{tool_descriptors, tool_examples, validate_against_schema};
use super::*;
use crate::config::Config;
use crate::gateway::ProviderKind;

fn service() -> (tempfile::TempDir, Arc<SparkService>) {
    let dir = tempfile::tempdir().unwrap();
    let mut config = Config::default();
    config.store.root = dir.path().to_path_buf();
    let service = Arc::new(SparkService::new(&config).unwrap());
    (dir, service)
}

fn call(service: &Arc<SparkService>, method: &str, params: Value) -> Value {
    dispatch(service, &json!({ "jsonrpc": "2.0", "id": 1, "method": method, "params": params }))
}

fn ingest_tz_docs(service: &Arc<SparkService>) {
    let result = call(
        service,
        "ingest_documentation",
        json!({ "blobs": [
            { "source": "pandas", "path": "timeseries/tz.md",
              "body": "Use tz_localize to attach a timezone, tz_convert to move zones." },
            { "source": "pandas", "path": "io/csv.md", "body": "read_csv parses files." },
            { "source": "numpy", "path": "array.md", "body": "Broadcasting aligns shapes." },
        ] }),
    );
    assert_eq!(result["result"]["inserted"], 3);
}

#[test]
fn discovery_lists_exactly_the_four_tools() {
    let (_dir, service) = service();
    let result = call(&service, "tools/list", json!({}));
    let tools = result["result"]["tools"].as_array().unwrap();
    let names: Vec<&str> = tools.iter().map(|t| t["name"].as_str().unwrap()).collect();
    assert_eq!(names, TOOL_DESCRIPTORS);
}

#[test]
fn schemas_validate_their_own_examples() {
    for descriptor in tool_descriptors() {
        let (input, output) = tool_examples(descriptor.name);
        validate_against_schema(&descriptor.input_schema, &input)
            .unwrap_or_else(|e| panic!("{} input: {e}", descriptor.name));
        validate_against_schema(&descriptor.output_schema, &output)
            .unwrap_or_else(|e| panic!("{} output: {e}", descriptor.name));
    }
}

#[test]
fn schema_checker_rejects_bad_values() {
    let descriptor = &tool_descriptors()[1];
    assert!(validate_against_schema(
        &descriptor.input_schema,
        &json!({ "recommendation_id": "x", "outcome": "sideways" })
    )
    .is_err());
    assert!(validate_against_schema(&descriptor.input_schema, &json!({ "outcome": "accepted" }))
        .is_err());
}

#[test]
fn recommendation_tool_contract() {
    let (_dir, service) = service();
    ingest_tz_docs(&service);
    let result = call(&service, "get_recommendation", json!({ "problem": "use tz_localize" }));
    let body = &result["result"];
    assert!(!body["guidance_text"].as_str().unwrap().is_empty());
    assert!(!body["citations"].as_array().unwrap().is_empty());
    assert!(body["recommendation_id"].is_string());
    assert_eq!(result["id"], 1);
}

#[test]
fn missing_problem_is_invalid_params() {
    let (_dir, service) = service();
    let result = call(&service, "get_recommendation", json!({}));
    assert_eq!(result["error"]["code"], INVALID_PARAMS);
}

fn masked(mut v: Value) -> Value {
    if let Some(obj) = v.get_mut("result").and_then(Value::as_object_mut) {
        obj.remove("recommendation_id");
        obj.remove("created_at");
    }
    v
}

#[test]
fn identical_calls_identical_modulo_volatile_fields() {
    let (_dir, service) = service();
    ingest_tz_docs(&service);
    let a = call(&service, "get_recommendation", json!({ "problem": "use tz_localize" }));
    let b = call(&service, "get_recommendation", json!({ "problem": "use tz_localize" }));
    assert_ne!(a["result"]["recommendation_id"], b["result"]["recommendation_id"]);
    assert_eq!(masked(a), masked(b));
}

#[test]
fn feedback_roundtrip_and_not_found() {
    let (_dir, service) = service();
    ingest_tz_docs(&service);
    let rec = call(&service, "get_recommendation", json!({ "problem": "use tz_localize" }));
    let rec_id = rec["result"]["recommendation_id"].as_str().unwrap();
    let ack = call(
        &service,
        "submit_feedback",
        json!({ "recommendation_id": rec_id, "outcome": "accepted" }),
    );
    assert!(ack["result"]["trace_id"].is_string());

    let missing = call(
        &service,
        "submit_feedback",
        json!({ "recommendation_id": "nope", "outcome": "accepted" }),
    );
    assert_eq!(missing["error"]["code"], NOT_FOUND);

    let bad = call(
        &service,
        "submit_feedback",
        json!({ "recommendation_id": rec_id, "outcome": "sideways" }),
    );
    assert_eq!(bad["error"]["code"], INVALID_PARAMS);
}

#[test]
fn ingest_rejects_per_entry_not_per_request() {
    let (_dir, service) = service();
    let result = call(
        &service,
        "ingest_documentation",
        json!({ "blobs": [
            { "source": "pandas", "path": "a.md", "body": "content" },
            { "source": "pandas", "path": "b.md", "body": "" },
            42,
        ] }),
    );
    let report = &result["result"];
    assert_eq!(report["inserted"], 1);
    assert_eq!(report["rejected"], 2);
    let rejections = report["rejections"].as_array().unwrap();
    assert_eq!(rejections[0]["index"], 1);
    assert_eq!(rejections[1]["index"], 2);
    assert!(rejections[1]["reason"].as_str().unwrap().contains("malformed"));
}

#[test]
fn fresh_store_stats() {
    let (_dir, service) = service();
    let result = call(&service, "memory_stats", json!({}));
    let stats = &result["result"];
    assert_eq!(stats["epoch_number"], 0);
    assert_eq!(stats["doc_count"], 0);
    assert_eq!(stats["trace_count"], 0);
    assert_eq!(stats["insight_count"], 0);
}

#[test]
fn protocol_violations_map_to_standard_codes() {
    let (_dir, service) = service();
    let cases = [
        (json!([1, 2, 3]), INVALID_REQUEST),
        (json!({ "jsonrpc": "1.0", "id": 1, "method": "memory_stats" }), INVALID_REQUEST),
        (json!({ "jsonrpc": "2.0", "id": 1 }), INVALID_REQUEST),
        (json!({ "jsonrpc": "2.0", "id": [1], "method": "memory_stats" }), INVALID_REQUEST),
        (json!({ "jsonrpc": "2.0", "id": 1, "method": "no_such_tool" }), METHOD_NOT_FOUND),
        (
            json!({ "jsonrpc": "2.0", "id": 1, "method": "memory_stats", "params": [1] }),
            INVALID_PARAMS,
        ),
    ];
    for (request, code) in cases {
        let response = dispatch(&service, &request);
        assert_eq!(response["error"]["code"], code, "request: {request}");
        assert_eq!(response["jsonrpc"], "2.0");
    }
}

#[test]
fn response_echoes_string_ids() {
    let (_dir, service) = service();
    let response = dispatch(
        &service,
        &json!({ "jsonrpc": "2.0", "id": "req-77", "method": "memory_stats" }),
    );
    assert_eq!(response["id"], "req-77");
}

#[test]
fn stdio_survives_malformed_lines() {
    let (_dir, service) = service();
    let input = "this is not json\n\n{\"jsonrpc\":\"2.0\",\"id\":2,\"method\":\"memory_stats\"}\n";
    let mut output = Vec::new();
    serve_stdio(&service, Cursor::new(input), &mut output).unwrap();
    let lines: Vec<Value> = String::from_utf8(output)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["error"]["code"], PARSE_ERROR);
    assert_eq!(lines[1]["id"], 2);
    assert!(lines[1]["result"].is_object());
}

#[test]
fn http_surface_roundtrip() {
    let (_dir, service) = service();
    ingest_tz_docs(&service);
    let handle = serve_http(service.clone(), 0).unwrap();
    let base = format!("http://127.0.0.1:{}", handle.port());

    let health: Value =
        ureq::get(&format!("{base}/healthz")).call().unwrap().into_json().unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["epoch_number"], 0);

    let tools: Value = ureq::get(&format!("{base}/tools")).call().unwrap().into_json().unwrap();
    assert_eq!(tools["tools"].as_array().unwrap().len(), 4);

    let rpc: Value = ureq::post(&format!("{base}/rpc"))
        .send_json(json!({ "jsonrpc": "2.0", "id": 9, "method": "memory_stats" }))
        .unwrap()
        .into_json()
        .unwrap();
    assert_eq!(rpc["id"], 9);
    assert_eq!(rpc["result"]["doc_count"], 3);

    let parse: Value = ureq::post(&format!("{base}/rpc"))
        .send_string("{{{")
        .unwrap()
        .into_json()
        .unwrap();
    assert_eq!(parse["error"]["code"], PARSE_ERROR);

    handle.shutdown();
}

#[test]
fn transports_produce_identical_bodies() {
    let (_dir, service) = service();
    ingest_tz_docs(&service);
    let requests = [
        json!({ "jsonrpc": "2.0", "id": 1, "method": "tools/list" }),
        json!({ "jsonrpc": "2.0", "id": 2, "method": "memory_stats" }),
        json!({ "jsonrpc": "2.0", "id": 3, "method": "bogus" }),
    ];

    let stdin = requests.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("\n") + "\n";
    let mut stdio_out = Vec::new();
    serve_stdio(&service, Cursor::new(stdin), &mut stdio_out).unwrap();
    let stdio_lines: Vec<String> =
        String::from_utf8(stdio_out).unwrap().lines().map(String::from).collect();

    let handle = serve_http(service.clone(), 0).unwrap();
    let base = format!("http://127.0.0.1:{}", handle.port());
    for (request, expected) in requests.iter().zip(&stdio_lines) {
        let body = ureq::post(&format!("{base}/rpc"))
            .send_json(request.clone())
            .unwrap()
            .into_string()
            .unwrap();
        assert_eq!(&body, expected);
    }
    handle.shutdown();
}

#[test]
fn concurrent_http_recommendations() {
    let (_dir, service) = service();
    ingest_tz_docs(&service);
    let handle = serve_http(service.clone(), 0).unwrap();
    let base = Arc::new(format!("http://127.0.0.1:{}", handle.port()));

    let threads: Vec<_> = (0..20)
        .map(|i| {
            let base = base.clone();
            std::thread::spawn(move || {
                let response: Value = ureq::post(&format!("{base}/rpc"))
                    .send_json(json!({
                        "jsonrpc": "2.0", "id": i,
                        "method": "get_recommendation",
                        "params": { "problem": "use tz_localize" }
                    }))
                    .unwrap()
                    .into_json()
                    .unwrap();
                assert_eq!(response["id"], i);
                assert!(response["result"]["guidance_text"].is_string());
            })
        })
        .collect();
    for t in threads {
        t.join().unwrap();
    }
    handle.shutdown();
}

#[test]
fn oversized_body_is_rejected_politely() {
    let (_dir, service) = service();
    let big = format!(
        "{{\"jsonrpc\":\"2.0\",\"id\":1,\"method\":\"memory_stats\",\"params\":{{\"pad\":\"{}\"}}}}",
        "x".repeat(MAX_BODY_BYTES)
    );
    let mut output = Vec::new();
    serve_stdio(&service, Cursor::new(big + "\n"), &mut output).unwrap();
    let response: Value = serde_json::from_slice(output.strip_suffix(b"\n").unwrap()).unwrap();
    assert_eq!(response["error"]["code"], INVALID_REQUEST);
}

#[test]
fn provider_outage_maps_to_dash32050_and_store_survives() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = Config::default();
    config.store.root = dir.path().to_path_buf();
    config.gateway.generation.kind = ProviderKind::Http;
    config.gateway.generation.endpoint = Some("http://127.0.0.1:9".into());
    config.gateway.generation.auth_env = "SPARK_TEST_UNSET_CREDENTIAL".into();
    let service = Arc::new(SparkService::new(&config).unwrap());
    ingest_tz_docs(&service);

    let failed = call(&service, "get_recommendation", json!({ "problem": "use tz_localize" }));
    assert_eq!(failed["error"]["code"], PROVIDER_UNAVAILABLE);

    // the failing request corrupted nothing: the store keeps serving
    let stats = call(&service, "memory_stats", json!({}));
    assert_eq!(stats["result"]["doc_count"], 3);
    assert_eq!(stats["result"]["trace_count"], 0);
}

#[test]
fn port_in_use_is_a_startup_error() {
    let (_dir, service) = service();
    let first = serve_http(service.clone(), 0).unwrap();
    let err = serve_http(service.clone(), first.port());
    assert!(matches!(err, Err(ServiceError::Startup(_))));
    first.shutdown();
}
