//! HTTP transport: JSON-RPC over POST /rpc, plus /healthz and /tools.

use std::io::Read;
use std::sync::Arc;
use std::thread::JoinHandle;

use serde_json::{json, Value};
use tiny_http::{Header, Method, Response, Server};

use super::{dispatch, parse_error_response, rpc_error, tools, ServiceError, SparkService,
            INVALID_REQUEST, MAX_BODY_BYTES};

const WORKERS: usize = 8;

pub struct HttpHandle {
    server: Arc<Server>,
    port: u16,
    workers: Vec<JoinHandle<()>>,
}

impl HttpHandle {
    pub fn port(&self) -> u16 {
        self.port
    }

    /// Stop accepting and drain in-flight requests.
    pub fn shutdown(mut self) {
        self.stop();
    }

    // unblock() wakes exactly one blocked recv(), so issue one per worker
    fn stop(&mut self) {
        for _ in 0..self.workers.len() {
            self.server.unblock();
        }
        for worker in self.workers.drain(..) {
            let _ = worker.join();
        }
    }

    /// Block until the server is unblocked from another thread.
    pub fn join(mut self) {
        for worker in self.workers.drain(..) {
            let _ = worker.join();
        }
    }
}

impl Drop for HttpHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Bind 127.0.0.1:`port` (0 = ephemeral) and serve until shutdown.
pub fn serve_http(service: Arc<SparkService>, port: u16) -> Result<HttpHandle, ServiceError> {
    let server = Server::http(("127.0.0.1", port))
        .map_err(|e| ServiceError::Startup(format!("cannot bind port {port}: {e}")))?;
    let server = Arc::new(server);
    let port = match server.server_addr() {
        tiny_http::ListenAddr::IP(addr) => addr.port(),
        _ => port,
    };
    let workers = (0..WORKERS)
        .map(|_| {
            let server = server.clone();
            let service = service.clone();
            std::thread::spawn(move || {
                while let Ok(request) = server.recv() {
                    handle_request(&service, request);
                }
            })
        })
        .collect();
    Ok(HttpHandle { server, port, workers })
}

fn json_response(status: u16, body: &Value) -> Response<std::io::Cursor<Vec<u8>>> {
    let header = Header::from_bytes("Content-Type", "application/json").unwrap();
    Response::from_data(serde_json::to_vec(body).unwrap())
        .with_status_code(status)
        .with_header(header)
}

fn handle_request(service: &Arc<SparkService>, mut request: tiny_http::Request) {
    let url = request.url().to_string();
    let response = match (request.method().clone(), url.as_str()) {
        (Method::Get, "/healthz") => {
            let epoch = service.store().latest_epoch().map(|e| e.epoch_number);
            json_response(200, &json!({ "status": "ok", "epoch_number": epoch }))
        }
        (Method::Get, "/tools") => json_response(200, &json!({ "tools": tools::descriptors() })),
        (Method::Post, "/rpc") => {
            let mut body = Vec::new();
            let read = request
                .as_reader()
                .take(MAX_BODY_BYTES as u64 + 1)
                .read_to_end(&mut body);
            let rpc = match read {
                Err(_) => parse_error_response(),
                Ok(_) if body.len() > MAX_BODY_BYTES => {
                    rpc_error(Value::Null, INVALID_REQUEST, "request too large")
                }
                Ok(_) => match serde_json::from_slice::<Value>(&body) {
                    Ok(req) => dispatch(service, &req),
                    Err(_) => parse_error_response(),
                },
            };
            json_response(200, &rpc)
        }
        _ => json_response(404, &json!({ "error": "not found" })),
    };
    let _ = request.respond(response);
}
