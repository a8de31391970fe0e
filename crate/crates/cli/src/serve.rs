//! Local classify endpoint.
//!
//! `POST /classify` with `{"text": "..."}` answers
//! `{"probabilities": [..20], "labels": [codes], "warnings": [..]}`.
//! The listener is up before the artifact finishes loading; until then every
//! request gets 503. `GET /health` reports the loading state.

use std::io::Read;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::stages::Artifact;
use crate::CliError;

const MAX_BODY: u64 = 1 << 20;

#[derive(Deserialize)]
struct ClassifyRequest {
    text: String,
}

type Loaded = Result<Artifact, String>;

/// A running endpoint. Dropping it without [`ServeHandle::shutdown`] leaves
/// the workers running until the process exits.
pub struct ServeHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl ServeHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn join(self) {
        for w in self.workers {
            let _ = w.join();
        }
    }

    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        self.join();
    }
}

/// Binds `addr`, then loads the artifact on a background thread.
pub fn serve<L>(addr: &str, threads: usize, load: L) -> Result<ServeHandle, CliError>
where
    L: FnOnce() -> Result<Artifact, CliError> + Send + 'static,
{
    let server = Arc::new(Server::http(addr).map_err(|e| CliError::Config(format!("cannot bind {addr}: {e}")))?);
    let bound = server.server_addr().to_ip().ok_or_else(|| CliError::Config("not an IP listener".into()))?;
    let state: Arc<OnceLock<Loaded>> = Arc::new(OnceLock::new());
    let stop = Arc::new(AtomicBool::new(false));
    let mut workers = Vec::new();
    {
        let state = state.clone();
        workers.push(thread::spawn(move || {
            let _ = state.set(load().map_err(|e| e.to_string()));
        }));
    }
    for _ in 0..threads.max(1) {
        let (server, state, stop) = (server.clone(), state.clone(), stop.clone());
        workers.push(thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                match server.recv_timeout(Duration::from_millis(50)) {
                    Ok(Some(req)) => handle(req, state.get()),
                    Ok(None) => {}
                    Err(_) => break,
                }
            }
        }));
    }
    Ok(ServeHandle { addr: bound, stop, workers })
}

fn respond(req: Request, status: u16, body: serde_json::Value) {
    let header = Header::from_bytes("Content-Type", "application/json").expect("static header");
    let _ = req.respond(Response::from_string(body.to_string()).with_status_code(status).with_header(header));
}

fn handle(mut req: Request, state: Option<&Loaded>) {
    let path = req.url().split('?').next().unwrap_or("").to_string();
    match (req.method(), path.as_str()) {
        (Method::Get, "/health") => match state {
            None => respond(req, 503, json!({"status": "loading"})),
            Some(Ok(_)) => respond(req, 200, json!({"status": "ready"})),
            Some(Err(e)) => respond(req, 500, json!({"status": "failed", "error": e})),
        },
        (Method::Post, "/classify") => {
            let artifact = match state {
                None => return respond(req, 503, json!({"error": "model is loading"})),
                Some(Err(e)) => return respond(req, 500, json!({"error": e})),
                Some(Ok(a)) => a,
            };
            let mut body = String::new();
            if req.as_reader().take(MAX_BODY).read_to_string(&mut body).is_err() {
                return respond(req, 400, json!({"error": "body is not UTF-8"}));
            }
            if body.trim().is_empty() {
                return respond(req, 400, json!({"error": "empty body"}));
            }
            let parsed: ClassifyRequest = match serde_json::from_str(&body) {
                Ok(p) => p,
                Err(e) => return respond(req, 400, json!({"error": format!("expected {{\"text\": ...}}: {e}")})),
            };
            if parsed.text.trim().is_empty() {
                return respond(req, 400, json!({"error": "empty text"}));
            }
            match artifact.classify(&parsed.text) {
                Ok(p) => respond(req, 200, serde_json::to_value(p).expect("prediction serializes")),
                Err(e) => respond(req, 500, json!({"error": e.to_string()})),
            }
        }
        (_, "/classify") | (_, "/health") => respond(req, 405, json!({"error": "method not allowed"})),
        _ => respond(req, 404, json!({"error": "not found"})),
    }
}
