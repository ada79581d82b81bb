//! Tool descriptors published for discovery, plus a minimal schema
//! checker used to keep the descriptors' examples honest.

use serde::Serialize;
use serde_json::{json, Value};

#[derive(Debug, Clone, Serialize)]
pub struct ToolDescriptor {
    pub name: &'static str,
    pub description: &'static str,
    pub input_schema: Value,
    pub output_schema: Value,
}

pub const TOOL_DESCRIPTORS: [&str; 4] =
    ["get_recommendation", "submit_feedback", "ingest_documentation", "memory_stats"];

const OUTCOMES: [&str; 4] =
    ["accepted", "rejected", "partially_useful", "no_recommendation_available"];

pub fn tool_descriptors() -> Vec<ToolDescriptor> {
    vec![
        ToolDescriptor {
            name: "get_recommendation",
            description: "Get a context-aware recommendation for a coding problem, \
                          grounded in documentation and curated experiential insights.",
            input_schema: json!({
                "type": "object",
                "properties": {
                    "problem": { "type": "string" },
                    "code_context": { "type": "string" }
                },
                "required": ["problem"]
            }),
            output_schema: json!({
                "type": "object",
                "properties": {
                    "recommendation_id": { "type": "string" },
                    "guidance_text": { "type": "string" },
                    "best_practices": { "type": "array", "items": { "type": "string" } },
                    "citations": { "type": "array", "items": { "type": "object" } },
                    "epoch_number": { "type": "integer" }
                },
                "required": ["recommendation_id", "guidance_text", "citations", "epoch_number"]
            }),
        },
        ToolDescriptor {
            name: "submit_feedback",
            description: "Report the outcome of a previous recommendation, optionally \
                          with hindsight feedback describing what would have helped.",
            input_schema: json!({
                "type": "object",
                "properties": {
                    "recommendation_id": { "type": "string" },
                    "outcome": { "type": "string", "enum": OUTCOMES },
                    "hindsight_feedback": { "type": "string" },
                    "agent_tag": { "type": "string" }
                },
                "required": ["recommendation_id", "outcome"]
            }),
            output_schema: json!({
                "type": "object",
                "properties": { "trace_id": { "type": "string" } },
                "required": ["trace_id"]
            }),
        },
        ToolDescriptor {
            name: "ingest_documentation",
            description: "Ingest documentation blobs into the shared corpus. \
                          Malformed entries are rejected per-entry in the report.",
            input_schema: json!({
                "type": "object",
                "properties": {
                    "blobs": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "properties": {
                                "source": { "type": "string" },
                                "path": { "type": "string" },
                                "title": { "type": "string" },
                                "body": { "type": "string" },
                                "symbols": { "type": "array", "items": { "type": "string" } }
                            },
                            "required": ["source", "path", "body"]
                        }
                    }
                },
                "required": ["blobs"]
            }),
            output_schema: json!({
                "type": "object",
                "properties": {
                    "inserted": { "type": "integer" },
                    "deduplicated": { "type": "integer" },
                    "rejected": { "type": "integer" },
                    "rejections": { "type": "array", "items": { "type": "object" } }
                },
                "required": ["inserted", "deduplicated", "rejected"]
            }),
        },
        ToolDescriptor {
            name: "memory_stats",
            description: "Counts for the current memory state, read from one snapshot.",
            input_schema: json!({ "type": "object", "properties": {} }),
            output_schema: json!({
                "type": "object",
                "properties": {
                    "epoch_number": { "type": ["integer", "null"] },
                    "doc_count": { "type": "integer" },
                    "trace_count": { "type": "integer" },
                    "insight_count": { "type": "integer" },
                    "index_version": { "type": "integer" }
                },
                "required": ["doc_count", "trace_count", "insight_count", "index_version"]
            }),
        },
    ]
}

pub fn descriptors() -> Value {
    serde_json::to_value(tool_descriptors()).unwrap()
}

/// Example (input, output) pairs per tool, checked against the schemas
/// in tests.
#[cfg(test)]
pub fn tool_examples(name: &str) -> (Value, Value) {
    match name {
        "get_recommendation" => (
            json!({ "problem": "how do I use tz_localize?", "code_context": "import pandas" }),
            json!({
                "recommendation_id": "a1b2",
                "guidance_text": "Use tz_localize on a naive index.",
                "best_practices": ["See pandas:timeseries/tz.md"],
                "citations": [{ "doc_ref": "c3d4", "locator": "pandas:timeseries/tz.md" }],
                "epoch_number": 0
            }),
        ),
        "submit_feedback" => (
            json!({ "recommendation_id": "a1b2", "outcome": "accepted" }),
            json!({ "trace_id": "tr-1" }),
        ),
        "ingest_documentation" => (
            json!({ "blobs": [{ "source": "pandas", "path": "io/csv.md", "body": "read_csv..." }] }),
            json!({ "inserted": 1, "deduplicated": 0, "rejected": 0, "rejections": [] }),
        ),
        "memory_stats" => (
            json!({}),
            json!({
                "epoch_number": 0,
                "doc_count": 1,
                "trace_count": 0,
                "insight_count": 0,
                "index_version": 1
            }),
        ),
        _ => panic!("unknown tool {name}"),
    }
}

/// Minimal structural check for the schema dialect the descriptors use:
/// type (incl. union), properties, required, items, enum.
pub fn validate_against_schema(schema: &Value, value: &Value) -> Result<(), String> {
    if let Some(allowed) = schema.get("enum").and_then(Value::as_array) {
        if !allowed.contains(value) {
            return Err(format!("{value} not in enum"));
        }
    }
    if let Some(ty) = schema.get("type") {
        let types: Vec<&str> = match ty {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().filter_map(Value::as_str).collect(),
            _ => return Err("bad type keyword".into()),
        };
        let matches = types.iter().any(|t| match *t {
            "object" => value.is_object(),
            "array" => value.is_array(),
            "string" => value.is_string(),
            "integer" => value.as_i64().is_some() || value.as_u64().is_some(),
            "number" => value.is_number(),
            "boolean" => value.is_boolean(),
            "null" => value.is_null(),
            _ => false,
        });
        if !matches {
            return Err(format!("{value} does not match type {ty}"));
        }
    }
    if let Some(required) = schema.get("required").and_then(Value::as_array) {
        for key in required.iter().filter_map(Value::as_str) {
            if value.get(key).is_none() {
                return Err(format!("missing required key {key}"));
            }
        }
    }
    if let (Some(props), Some(obj)) =
        (schema.get("properties").and_then(Value::as_object), value.as_object())
    {
        for (key, sub) in props {
            if let Some(v) = obj.get(key) {
                validate_against_schema(sub, v).map_err(|e| format!("{key}: {e}"))?;
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), value.as_array()) {
        for (i, v) in arr.iter().enumerate() {
            validate_against_schema(items, v).map_err(|e| format!("[{i}]: {e}"))?;
        }
    }
    Ok(())
}
