//! Tests that need access to the tape forward and raw parameters:
//! finite-difference gradient verification and agreement between the
//! training (tape) and inference (batched) forward paths.

use std::collections::BTreeMap;

use crate::embedding::EmbeddingTable;
use crate::nn::{softmax_rows_inplace, Tape};

use super::*;

fn tiny_config(mode: Mode) -> FusionConfig {
    FusionConfig {
        d1: 16,
        d2: 8,
        l: 8,
        lm_layers: 1,
        lm_heads: 2,
        t1_layers: 1,
        t2_layers: 1,
        n_classes: 2,
        dropout: 0.0,
        seed: 17,
        mode,
    }
}

fn tiny_table() -> EmbeddingTable {
    let mut vectors = BTreeMap::new();
    for (i, c) in "你好吗挺坏的".chars().enumerate() {
        vectors.insert(c, (0..8).map(|j| ((i * 8 + j) as f64 * 0.13).sin() * 0.4).collect());
    }
    EmbeddingTable::new(8, vectors).unwrap()
}

fn tiny_model(mode: Mode) -> FusionModel {
    let vocab = Vocab::from_texts(["你好吗", "挺坏的", "你坏吗"]);
    FusionModel::new(tiny_config(mode), vocab, Some(tiny_table())).unwrap()
}

fn loss_of(model: &FusionModel, text: &str, label: usize) -> f64 {
    let mut tape = Tape::new();
    let leaves = model.register_leaves(&mut tape);
    let logits = model.forward_tape(&mut tape, &leaves, text, None).unwrap();
    let ce = tape.cross_entropy(logits, label);
    tape.value(ce)[[0, 0]]
}

/// Central-difference check of the tape gradients for the parameters the
/// fusion path introduces (projection, fuse, head) plus a text-channel
/// matrix, on the full model.
#[test]
fn fusion_gradients_match_finite_differences() {
    let mut model = tiny_model(Mode::FullFusion);
    let (text, label) = ("你坏吗", 1);

    let mut tape = Tape::new();
    let leaves = model.register_leaves(&mut tape);
    let logits = model.forward_tape(&mut tape, &leaves, text, None).unwrap();
    let ce = tape.cross_entropy(logits, label);
    tape.backward(ce);
    let analytic: BTreeMap<String, ndarray::Array2<f64>> = leaves
        .by_name
        .iter()
        .map(|(n, &id)| (n.clone(), tape.grad(id).cloned().unwrap_or_else(|| ndarray::Array2::zeros(model.params.get(n).dim()))))
        .collect();

    let eps = 1e-5;
    for name in ["proj.w", "proj.b", "fuse.w", "head.w", "head.b", "lm.0.wq", "t1.0.ff1_w"] {
        let (rows, cols) = model.params.get(name).dim();
        let g = &analytic[name];
        // stride keeps the biggest matrices affordable while still touching
        // every region
        let stride = if rows * cols > 400 { 7 } else { 1 };
        for flat in (0..rows * cols).step_by(stride) {
            let (r, c) = (flat / cols, flat % cols);
            model.params.get_mut(name)[[r, c]] += eps;
            let plus = loss_of(&model, text, label);
            model.params.get_mut(name)[[r, c]] -= 2.0 * eps;
            let minus = loss_of(&model, text, label);
            model.params.get_mut(name)[[r, c]] += eps;
            let fd = (plus - minus) / (2.0 * eps);
            let a = g[[r, c]];
            let denom = a.abs().max(fd.abs()).max(1e-6);
            assert!(
                ((a - fd) / denom).abs() < 1e-4,
                "{name}[{r},{c}]: analytic {a}, finite difference {fd}"
            );
        }
    }
}

/// The training-time tape forward and the batched inference forward are the
/// same arithmetic; their probabilities must agree to the last bit.
#[test]
fn tape_and_batch_forward_agree() {
    for mode in [Mode::Baseline, Mode::GraphConcat, Mode::FullFusion] {
        let model = tiny_model(mode);
        let texts = ["你好吗", "挺坏的", "你坏吗挺好的你好吗挺"]; // last one overruns l=8
        let batch = model.predict_probs(&texts).unwrap();
        for (i, text) in texts.iter().enumerate() {
            let mut tape = Tape::new();
            let leaves = model.register_leaves(&mut tape);
            let logits = model.forward_tape(&mut tape, &leaves, text, None).unwrap();
            let mut probs = tape.value(logits).clone();
            softmax_rows_inplace(&mut probs);
            for (a, b) in probs.row(0).iter().zip(&batch[i]) {
                assert_eq!(a.to_bits(), b.to_bits(), "mode {:?} text {i}", mode);
            }
        }
    }
}

/// Prediction must not depend on what else shares the batch.
#[test]
fn batch_composition_does_not_change_results() {
    let model = tiny_model(Mode::FullFusion);
    let solo = model.predict_probs(&["你好吗"]).unwrap();
    let mixed = model.predict_probs(&["你好吗", "挺坏的", "你坏吗"]).unwrap();
    for (a, b) in solo[0].iter().zip(&mixed[0]) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

/// A zeroed node channel and an all-OOV text are indistinguishable in full
/// fusion: both feed H2 = 0.
#[test]
fn zero_table_equals_oov_text() {
    let vocab = Vocab::from_texts(["你好吗", "挺坏的"]);
    let zeros = EmbeddingTable::new(
        8,
        "你好吗挺坏的".chars().map(|c| (c, vec![0.0; 8])).collect::<BTreeMap<_, _>>(),
    )
    .unwrap();
    let with_zero_table =
        FusionModel::new(tiny_config(Mode::FullFusion), vocab.clone(), Some(zeros)).unwrap();
    let with_real_table =
        FusionModel::new(tiny_config(Mode::FullFusion), vocab, Some(tiny_table())).unwrap();
    // same seed → identical trainable parameters
    let oov_text = "ABCDEF"; // not in the node table, so H2 = 0 either way
    let a = with_zero_table.fuse_forward(oov_text).unwrap();
    let b = with_real_table.fuse_forward(oov_text).unwrap();
    assert_eq!(a, b);
}

#[test]
fn dropout_training_is_seed_deterministic() {
    use crate::dataset::LabeledText;
    let data: Vec<LabeledText> = vec![
        LabeledText::new("你好吗", 0),
        LabeledText::new("挺坏的", 1),
        LabeledText::new("你坏吗", 1),
        LabeledText::new("挺好的", 0),
    ];
    let mk = || {
        let cfg = FusionConfig { dropout: 0.2, ..tiny_config(Mode::FullFusion) };
        let vocab = Vocab::from_texts(data.iter().map(|s| s.text.as_str()));
        let mut m = FusionModel::new(cfg, vocab, Some(tiny_table())).unwrap();
        m.train(&data, 3, 2, 0.05).unwrap();
        m
    };
    let (m1, m2) = (mk(), mk());
    for ((n1, p1), (_, p2)) in m1.params.iter().zip(m2.params.iter()) {
        assert!(
            p1.iter().zip(p2.iter()).all(|(a, b)| a.to_bits() == b.to_bits()),
            "parameter {n1} diverged across identically seeded runs"
        );
    }
}
