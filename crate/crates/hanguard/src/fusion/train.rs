//! Mini-batch gradient-descent training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::LabeledText;
use crate::error::{Error, Result};
use crate::nn::{argmax_row, Tape};

use super::FusionModel;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EpochStats {
    /// Mean cross-entropy over the epoch's samples.
    pub loss: f64,
    /// Fraction of samples whose training-pass argmax matched the label.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl FusionModel {
    /// Trains in place. Gradients are averaged per mini-batch and applied
    /// with plain SGD. The node table never receives gradients; it is not a
    /// parameter. Deterministic for a fixed config seed: the shuffle and
    /// dropout draws come from one seeded stream.
    pub fn train(
        &mut self,
        data: &[LabeledText],
        epochs: usize,
        batch_size: usize,
        lr: f64,
    ) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        if epochs == 0 || batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be positive, got {lr}")));
        }
        for (i, s) in data.iter().enumerate() {
            if s.label >= self.config.n_classes {
                return Err(Error::invalid(format!(
                    "sample {i} has label {} but the model classifies {} classes",
                    s.label, self.config.n_classes
                )));
            }
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5452_414e); // decorrelate from init
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut report = TrainReport { epochs: Vec::with_capacity(epochs) };

        for _ in 0..epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            let mut correct = 0usize;

            for batch in order.chunks(batch_size) {
                let mut tape = Tape::new();
                let leaves = self.register_leaves(&mut tape);
                let mut losses = Vec::with_capacity(batch.len());
                for &idx in batch {
                    let sample = &data[idx];
                    let logits = self.forward_tape(&mut tape, &leaves, &sample.text, Some(&mut rng))?;
                    let row = tape.value(logits).row(0).to_owned();
                    if argmax_row(&row) == sample.label {
                        correct += 1;
                    }
                    let ce = tape.cross_entropy(logits, sample.label);
                    loss_sum += tape.value(ce)[[0, 0]];
                    losses.push(ce);
                }
                let total = losses
                    .into_iter()
                    .reduce(|a, b| tape.add(a, b))
                    .expect("batch is nonempty");
                let mean = tape.scale(total, 1.0 / batch.len() as f64);
                tape.backward(mean);

                for (name, leaf) in &leaves.by_name {
                    if let Some(g) = tape.grad(*leaf) {
                        let p = self.params.get_mut(name);
                        p.zip_mut_with(g, |w, &gw| *w -= lr * gw);
                    }
                }
            }

            report.epochs.push(EpochStats {
                loss: loss_sum / data.len() as f64,
                accuracy: correct as f64 / data.len() as f64,
            });
        }

        for (name, p) in self.params.iter() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::internal(format!("parameter {name} became non-finite during training")));
            }
        }
        Ok(report)
    }
}
