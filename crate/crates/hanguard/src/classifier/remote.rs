//! HTTP/JSON classifier client.
//!
//! Wire protocol: `POST {base_url}/predict` with body `{"texts": [...]}`,
//! answered by `{"probs": [[p1,...,pk], ...]}` and status 200. Any other
//! status, connect failure or timeout is a transport fault and gets retried
//! (the endpoint is stateless, so retries are safe); a 200 with a malformed
//! or non-stochastic body is a protocol violation and is not retried.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

use super::Classifier;

/// Tolerance on each probability row summing to 1. Looser than the local
/// adapters because the wire may carry reduced-precision decimals.
pub const REMOTE_SUM_TOLERANCE: f64 = 1e-4;

#[derive(Serialize)]
struct PredictRequest<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct PredictResponse {
    probs: Vec<Vec<f64>>,
}

/// Counting semaphore bounding concurrent HTTP requests.
struct Gate {
    slots: Mutex<usize>,
    freed: Condvar,
}

impl Gate {
    fn new(n: usize) -> Gate {
        Gate { slots: Mutex::new(n), freed: Condvar::new() }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut slots = self.slots.lock().unwrap();
        while *slots == 0 {
            slots = self.freed.wait(slots).unwrap();
        }
        *slots -= 1;
        GateGuard { gate: self }
    }
}

struct GateGuard<'a> {
    gate: &'a Gate,
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.gate.slots.lock().unwrap() += 1;
        self.gate.freed.notify_one();
    }
}

pub struct RemoteClassifier {
    agent: ureq::Agent,
    predict_url: String,
    max_batch: usize,
    retries: u32,
    gate: Gate,
    queries: AtomicU64,
}

impl RemoteClassifier {
    /// `base_url` like `http://127.0.0.1:8473`; a trailing slash is fine.
    pub fn new(base_url: &str, timeout: Duration, max_batch: usize) -> Result<RemoteClassifier> {
        if max_batch == 0 {
            return Err(Error::invalid("max_batch must be positive"));
        }
        let agent = ureq::config::Config::builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Ok(RemoteClassifier {
            agent,
            predict_url: format!("{}/predict", base_url.trim_end_matches('/')),
            max_batch,
            retries: 2,
            gate: Gate::new(4),
            queries: AtomicU64::new(0),
        })
    }

    /// Extra attempts after a transport failure (default 2).
    pub fn with_retries(mut self, retries: u32) -> RemoteClassifier {
        self.retries = retries;
        self
    }

    /// Cap on concurrent in-flight requests (default 4).
    pub fn with_max_in_flight(mut self, n: usize) -> RemoteClassifier {
        assert!(n > 0, "in-flight bound must be positive");
        self.gate = Gate::new(n);
        self
    }

    fn post_once(&self, chunk: &[&str]) -> Result<Vec<Vec<f64>>> {
        let _slot = self.gate.acquire();
        let mut resp = self
            .agent
            .post(&self.predict_url)
            .send_json(PredictRequest { texts: chunk })
            .map_err(|e| Error::Transport(format!("POST {}: {e}", self.predict_url)))?;
        let status = resp.status().as_u16();
        if status != 200 {
            return Err(Error::Transport(format!("{} answered status {status}", self.predict_url)));
        }
        let body: PredictResponse = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Protocol(format!("bad predict response body: {e}")))?;
        validate_rows(&body.probs, chunk.len())?;
        Ok(body.probs)
    }

    fn post_chunk(&self, chunk: &[&str]) -> Result<Vec<Vec<f64>>> {
        let mut attempt = 0;
        loop {
            match self.post_once(chunk) {
                Err(Error::Transport(msg)) if attempt < self.retries => {
                    attempt += 1;
                    log::warn!("transport failure ({msg}), retry {attempt}/{}", self.retries);
                    std::thread::sleep(Duration::from_millis(20 * u64::from(attempt)));
                }
                other => return other,
            }
        }
    }
}

fn validate_rows(rows: &[Vec<f64>], expected: usize) -> Result<()> {
    if rows.len() != expected {
        return Err(Error::Protocol(format!(
            "response carries {} probability rows for {expected} texts",
            rows.len()
        )));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.is_empty() {
            return Err(Error::Protocol(format!("empty probability row at index {i}")));
        }
        if row.len() != rows[0].len() {
            return Err(Error::Protocol(format!(
                "row {i} has {} classes, row 0 has {}",
                row.len(),
                rows[0].len()
            )));
        }
        if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Protocol(format!("row {i} contains a negative or non-finite entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > REMOTE_SUM_TOLERANCE {
            return Err(Error::Protocol(format!("row {i} sums to {sum}, outside 1±{REMOTE_SUM_TOLERANCE}")));
        }
    }
    Ok(())
}

impl Classifier for RemoteClassifier {
    fn predict_probs(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        // Zero texts means zero requests; the server never hears about it.
        if texts.is_empty() {
            return Ok(Vec::new());
        }
        self.queries.fetch_add(texts.len() as u64, Ordering::Relaxed);
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.max_batch) {
            out.extend(self.post_chunk(chunk)?);
        }
        Ok(out)
    }

    fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_validation_catches_bad_sums() {
        assert!(validate_rows(&[vec![0.5, 0.5]], 1).is_ok());
        assert!(validate_rows(&[vec![0.5, 0.6]], 1).is_err());
        assert!(validate_rows(&[vec![0.5, 0.5]], 2).is_err());
        assert!(validate_rows(&[vec![0.5, 0.5], vec![1.0]], 2).is_err());
        assert!(validate_rows(&[vec![-0.1, 1.1]], 1).is_err());
        assert!(validate_rows(&[vec![]], 1).is_err());
    }

    #[test]
    fn gate_restores_slots() {
        let g = Gate::new(2);
        {
            let _a = g.acquire();
            let _b = g.acquire();
        }
        let _c = g.acquire();
        assert_eq!(*g.slots.lock().unwrap(), 1);
    }
}
