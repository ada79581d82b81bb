//! Stdio transport: one compact JSON-RPC document per line.

use std::io::{BufRead, Write};
use std::sync::Arc;

use super::{dispatch, parse_error_response, rpc_error, SparkService, INVALID_REQUEST,
            MAX_BODY_BYTES};

/// Serve newline-delimited JSON-RPC until EOF. Malformed lines get a
/// parse-error response and the server keeps going. Generic over the
/// streams so tests can drive it in-memory.
pub fn serve_stdio(
    service: &Arc<SparkService>,
    reader: impl BufRead,
    mut writer: impl Write,
) -> std::io::Result<()> {
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let response = if line.len() > MAX_BODY_BYTES {
            rpc_error(serde_json::Value::Null, INVALID_REQUEST, "request too large")
        } else {
            match serde_json::from_str::<serde_json::Value>(&line) {
                Ok(request) => dispatch(service, &request),
                Err(_) => parse_error_response(),
            }
        };
        serde_json::to_writer(&mut writer, &response)?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}
