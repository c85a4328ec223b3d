//! Minimal HTTP front end for a local model, speaking the same wire
//! protocol the remote adapter consumes. One worker thread, no TLS, no
//! auth: it exists so the client/server round trip can be exercised
//! end-to-end and so a model can be poked at from other processes.
//!
//! Probabilities are serialized with serde_json's shortest-roundtrip float
//! encoding, so a client parsing the body recovers bit-identical f64s and
//! attack outcomes through the wire match in-process outcomes exactly.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use serde::{Deserialize, Serialize};
use tiny_http::{Header, Response, Server};

use crate::fusion::FusionModel;
use crate::{Error, Result};

#[derive(Deserialize)]
struct PredictRequest {
    texts: Vec<String>,
}

#[derive(Serialize)]
struct PredictResponse {
    probs: Vec<Vec<f64>>,
}

fn json_header() -> Header {
    Header::from_bytes(&b"Content-Type"[..], &b"application/json; charset=utf-8"[..])
        .expect("static header")
}

fn handle(model: &FusionModel, req: &mut tiny_http::Request) -> (u16, String) {
    if req.url() != "/predict" {
        return (404, r#"{"error":"unknown route"}"#.into());
    }
    if *req.method() != tiny_http::Method::Post {
        return (405, r#"{"error":"POST only"}"#.into());
    }
    let mut body = String::new();
    if req.as_reader().read_to_string(&mut body).is_err() {
        return (400, r#"{"error":"unreadable body"}"#.into());
    }
    let parsed: PredictRequest = match serde_json::from_str(&body) {
        Ok(p) => p,
        Err(e) => return (400, format!(r#"{{"error":"bad request: {e}"}}"#)),
    };
    let refs: Vec<&str> = parsed.texts.iter().map(String::as_str).collect();
    match model.predict_probs(&refs) {
        Ok(probs) => match serde_json::to_string(&PredictResponse { probs }) {
            Ok(s) => (200, s),
            Err(e) => (500, format!(r#"{{"error":"{e}"}}"#)),
        },
        Err(e) => (500, format!(r#"{{"error":"{e}"}}"#)),
    }
}

fn serve_loop(server: &Server, model: &FusionModel, stop: &AtomicBool) {
    while !stop.load(Ordering::Acquire) {
        let mut req = match server.recv() {
            Ok(r) => r,
            // recv errors when unblocked for shutdown; re-check the flag.
            Err(_) => continue,
        };
        let (status, body) = handle(model, &mut req);
        let resp = Response::from_string(body).with_status_code(status).with_header(json_header());
        if let Err(e) = req.respond(resp) {
            log::warn!("failed to answer request: {e}");
        }
    }
}

/// A model listening on a local TCP port until stopped or dropped.
pub struct ToyServer {
    server: Arc<Server>,
    stop: Arc<AtomicBool>,
    worker: Option<JoinHandle<()>>,
    addr: SocketAddr,
}

impl ToyServer {
    /// Bind and start answering on a background thread. Use port 0 to let
    /// the OS pick a free port; the effective address is [`ToyServer::addr`].
    pub fn spawn(model: Arc<FusionModel>, bind: &str) -> Result<ToyServer> {
        let server = Arc::new(
            Server::http(bind).map_err(|e| Error::Transport(format!("bind {bind}: {e}")))?,
        );
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| Error::Transport("server has no IP listen address".into()))?;
        let stop = Arc::new(AtomicBool::new(false));
        let worker = {
            let server = Arc::clone(&server);
            let stop = Arc::clone(&stop);
            std::thread::spawn(move || serve_loop(&server, &model, &stop))
        };
        Ok(ToyServer { server, stop, worker: Some(worker), addr })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Stop accepting requests and join the worker.
    pub fn stop(mut self) {
        self.shutdown();
    }

    fn shutdown(&mut self) {
        self.stop.store(true, Ordering::Release);
        self.server.unblock();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for ToyServer {
    fn drop(&mut self) {
        if self.worker.is_some() {
            self.shutdown();
        }
    }
}

/// Serve on the calling thread until the process is killed. The CLI uses
/// this; tests want [`ToyServer::spawn`] instead.
pub fn serve_blocking(model: &FusionModel, bind: &str) -> Result<()> {
    let server = Server::http(bind).map_err(|e| Error::Transport(format!("bind {bind}: {e}")))?;
    let addr = server
        .server_addr()
        .to_ip()
        .ok_or_else(|| Error::Transport("server has no IP listen address".into()))?;
    println!("listening on http://{addr}");
    let stop = AtomicBool::new(false);
    serve_loop(&server, model, &stop);
    Ok(())
}
