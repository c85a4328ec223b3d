//! Classifier adapters: everything an attack is allowed to see.
//!
//! Attacks are strictly black-box, so they talk to a [`Classifier`] trait
//! object instead of a concrete model: batched probability queries plus a
//! query counter, nothing else. Three adapters live here:
//!
//! * [`LocalClassifier`]: wraps a trained [`FusionModel`] in-process.
//! * [`LinearOracle`]: a bag-of-characters linear model with known weights.
//!   Its best substitution is computable in closed form, which is what the
//!   attack oracle tests lean on.
//! * [`RemoteClassifier`] (in [`remote`]): the same contract over HTTP/JSON,
//!   paired with the [`server::ToyServer`] that exposes a local model.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::fusion::FusionModel;
use crate::{Error, Result};

pub mod remote;
pub mod server;

pub use remote::RemoteClassifier;
pub use server::ToyServer;

/// Black-box query interface. Implementations must tolerate concurrent
/// batch calls from different attack sessions; the counter counts texts,
/// not calls, and is bumped when a batch is submitted.
pub trait Classifier: Send + Sync {
    /// Class-probability vectors, one per input text, each summing to 1.
    fn predict_probs(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;

    /// Total number of texts scored so far.
    fn query_count(&self) -> u64;
}

/// Predicted label for one probability row: argmax, lowest index on ties.
pub fn label_of(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// In-process adapter over a trained fusion model.
pub struct LocalClassifier {
    model: Arc<FusionModel>,
    queries: AtomicU64,
}

impl LocalClassifier {
    pub fn new(model: Arc<FusionModel>) -> LocalClassifier {
        LocalClassifier { model, queries: AtomicU64::new(0) }
    }

    pub fn model(&self) -> &FusionModel {
        &self.model
    }
}

impl Classifier for LocalClassifier {
    fn predict_probs(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        self.queries.fetch_add(texts.len() as u64, Ordering::Relaxed);
        self.model.predict_probs(texts)
    }

    fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

/// Linear bag-of-characters classifier with fixed weights.
///
/// logits(text) = Σ_chars weights[c], softmaxed. Unknown characters
/// contribute nothing, so substituting one character shifts the logits by
/// exactly the difference of the two weight vectors. Attack tests exploit
/// that linearity to brute-force the optimal move independently.
pub struct LinearOracle {
    weights: BTreeMap<char, Vec<f64>>,
    n_classes: usize,
    queries: AtomicU64,
}

impl LinearOracle {
    pub fn new(weights: BTreeMap<char, Vec<f64>>) -> Result<LinearOracle> {
        let n_classes = match weights.values().next() {
            Some(v) => v.len(),
            None => return Err(Error::invalid("linear oracle needs at least one weight vector")),
        };
        if n_classes < 2 {
            return Err(Error::invalid("linear oracle weight vectors need at least 2 classes"));
        }
        for (c, v) in &weights {
            if v.len() != n_classes {
                return Err(Error::invalid(format!(
                    "weight vector for {c:?} has {} entries, expected {n_classes}",
                    v.len()
                )));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::invalid(format!("weight vector for {c:?} is not finite")));
            }
        }
        Ok(LinearOracle { weights, n_classes, queries: AtomicU64::new(0) })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// Sum of per-character weight vectors; empty text gives all zeros.
    pub fn logits(&self, text: &str) -> Vec<f64> {
        let mut z = vec![0.0; self.n_classes];
        for c in text.chars() {
            if let Some(w) = self.weights.get(&c) {
                for (zi, wi) in z.iter_mut().zip(w) {
                    *zi += wi;
                }
            }
        }
        z
    }

    pub fn probs(&self, text: &str) -> Vec<f64> {
        softmax_vec(self.logits(text))
    }
}

impl Classifier for LinearOracle {
    fn predict_probs(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        self.queries.fetch_add(texts.len() as u64, Ordering::Relaxed);
        Ok(texts.iter().map(|t| self.probs(t)).collect())
    }

    fn query_count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }
}

fn softmax_vec(mut z: Vec<f64>) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn oracle() -> LinearOracle {
        let mut w = BTreeMap::new();
        w.insert('好', vec![1.0, 0.0]);
        w.insert('坏', vec![0.0, 1.5]);
        LinearOracle::new(w).unwrap()
    }

    #[test]
    fn empty_text_is_uniform() {
        let o = oracle();
        let p = o.probs("");
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn single_char_matches_softmax() {
        let o = oracle();
        let p = o.probs("好");
        let e = 1.0f64.exp();
        assert!((p[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((p[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn substitution_shifts_logits_by_weight_difference() {
        let o = oracle();
        let a = o.logits("好啊啊");
        let b = o.logits("坏啊啊");
        assert_eq!(b[0] - a[0], 0.0 - 1.0);
        assert_eq!(b[1] - a[1], 1.5 - 0.0);
    }

    #[test]
    fn counter_counts_texts_not_calls() {
        let o = oracle();
        o.predict_probs(&["好", "坏", "好坏"]).unwrap();
        o.predict_probs(&["好"]).unwrap();
        assert_eq!(o.query_count(), 4);
    }

    #[test]
    fn rejects_ragged_weights() {
        let mut w = BTreeMap::new();
        w.insert('a', vec![1.0, 0.0]);
        w.insert('b', vec![1.0]);
        assert!(LinearOracle::new(w).is_err());
    }
}
