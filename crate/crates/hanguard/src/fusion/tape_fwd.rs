//! Training-time forward pass recorded on an autodiff tape.
//!
//! One tape serves a whole mini-batch: parameters are registered as leaves
//! once, each sample appends its own subgraph referencing them, and a single
//! backward pass accumulates batch gradients on the leaves.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::{Tape, TensorId};

use super::{FusionModel, Mode};

pub(crate) struct TapeLeaves {
    pub by_name: BTreeMap<String, TensorId>,
}

impl FusionModel {
    /// Registers every parameter as a tape leaf, in declared order.
    pub(crate) fn register_leaves(&self, tape: &mut Tape) -> TapeLeaves {
        let by_name = self.params.iter().map(|(n, v)| (n.to_string(), tape.leaf(v.clone()))).collect();
        TapeLeaves { by_name }
    }

    /// One encoder layer (post-norm residual transformer block) on the tape.
    /// `dropout_rng` draws one inverted-dropout mask after attention and one
    /// after the feed-forward block; `None` disables dropout.
    #[allow(clippy::too_many_arguments)]
    fn encoder_layer_tape(
        &self,
        tape: &mut Tape,
        leaves: &TapeLeaves,
        prefix: &str,
        mut x: TensorId,
        d: usize,
        mask: TensorId,
        dropout_rng: &mut Option<&mut ChaCha8Rng>,
    ) -> TensorId {
        let p = |name: &str| leaves.by_name[&format!("{prefix}.{name}")];
        let heads = self.config.lm_heads;
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();

        let q = tape.matmul(x, p("wq"));
        let k = tape.matmul(x, p("wk"));
        let v = tape.matmul(x, p("wv"));
        let mut cat: Option<TensorId> = None;
        for h in 0..heads {
            let (lo, hi) = (h * dk, (h + 1) * dk);
            let qh = tape.slice_cols(q, lo, hi);
            let kh = tape.slice_cols(k, lo, hi);
            let vh = tape.slice_cols(v, lo, hi);
            let kt = tape.transpose(kh);
            let sc = tape.matmul(qh, kt);
            let sc = tape.scale(sc, scale);
            let sc = tape.add(sc, mask);
            let aw = tape.softmax_rows(sc);
            let ah = tape.matmul(aw, vh);
            cat = Some(match cat {
                None => ah,
                Some(prev) => tape.concat_cols(prev, ah),
            });
        }
        let mut attn = tape.matmul(cat.expect("at least one head"), p("wo"));
        attn = self.maybe_dropout(tape, attn, dropout_rng);
        let res = tape.add(x, attn);
        let ln = tape.layer_norm_rows(res, 1e-5);
        let ln = tape.mul_row_broadcast(ln, p("ln1_g"));
        x = tape.add_row_broadcast(ln, p("ln1_b"));

        let ff = tape.matmul(x, p("ff1_w"));
        let ff = tape.add_row_broadcast(ff, p("ff1_b"));
        let ff = tape.relu(ff);
        let ff = tape.matmul(ff, p("ff2_w"));
        let mut ff = tape.add_row_broadcast(ff, p("ff2_b"));
        ff = self.maybe_dropout(tape, ff, dropout_rng);
        let res = tape.add(x, ff);
        let ln = tape.layer_norm_rows(res, 1e-5);
        let ln = tape.mul_row_broadcast(ln, p("ln2_g"));
        tape.add_row_broadcast(ln, p("ln2_b"))
    }

    fn maybe_dropout(&self, tape: &mut Tape, x: TensorId, rng: &mut Option<&mut ChaCha8Rng>) -> TensorId {
        let rate = self.config.dropout;
        let Some(rng) = rng.as_deref_mut() else { return x };
        if rate == 0.0 {
            return x;
        }
        let keep = 1.0 - rate;
        let dim = tape.value(x).dim();
        let mask = Array2::from_shape_fn(dim, |_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 / keep });
        let mask = tape.leaf(mask);
        tape.mul(x, mask)
    }

    /// Full forward for one sample, returning the logits node (1×n_classes).
    /// `dropout_rng` must be `Some` during training and `None` elsewhere.
    pub(crate) fn forward_tape(
        &self,
        tape: &mut Tape,
        leaves: &TapeLeaves,
        text: &str,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<TensorId> {
        let cfg = &self.config;
        let (tokens, n) = self.tokens_of(text)?;
        let mask = tape.leaf(self.mask_of(n));

        // text channel: char embeddings + positions through the LM stack
        let tok = tape.gather_rows(leaves.by_name["lm.embed"], &tokens);
        let mut h1 = tape.add(tok, leaves.by_name["lm.pos"]);
        for i in 0..cfg.lm_layers {
            h1 = self.encoder_layer_tape(tape, leaves, &format!("lm.{i}"), h1, cfg.d1, mask, &mut dropout_rng);
        }
        debug_assert_eq!(tape.value(h1).dim(), (cfg.l, cfg.d1));

        if cfg.mode == Mode::Baseline {
            let flat = tape.reshape(h1, 1, cfg.l * cfg.d1);
            let logits = tape.matmul(flat, leaves.by_name["head.w"]);
            return Ok(tape.add(logits, leaves.by_name["head.b"]));
        }

        // graph channel: frozen lookups through T1, flattened and projected
        let mut t1x = tape.leaf(self.h2_of(text)?);
        debug_assert_eq!(tape.value(t1x).dim(), (cfg.l, cfg.d2));
        for i in 0..cfg.t1_layers {
            t1x = self.encoder_layer_tape(tape, leaves, &format!("t1.{i}"), t1x, cfg.d2, mask, &mut dropout_rng);
        }
        debug_assert_eq!(tape.value(t1x).dim(), (cfg.l, cfg.d2));
        let flat2 = tape.reshape(t1x, 1, cfg.l * cfg.d2);
        let h3 = tape.matmul(flat2, leaves.by_name["proj.w"]);
        let h3 = tape.add(h3, leaves.by_name["proj.b"]);
        debug_assert_eq!(tape.value(h3).dim(), (1, cfg.d1));
        let h3r = tape.repeat_rows(h3, cfg.l);
        let cat = tape.concat_cols(h1, h3r);
        debug_assert_eq!(tape.value(cat).dim(), (cfg.l, 2 * cfg.d1));

        let logits = match cfg.mode {
            Mode::GraphConcat => {
                let flat = tape.reshape(cat, 1, 2 * cfg.l * cfg.d1);
                tape.matmul(flat, leaves.by_name["head.w"])
            }
            Mode::FullFusion => {
                let mut h4 = tape.matmul(cat, leaves.by_name["fuse.w"]);
                for i in 0..cfg.t2_layers {
                    h4 = self.encoder_layer_tape(tape, leaves, &format!("t2.{i}"), h4, cfg.d1, mask, &mut dropout_rng);
                }
                debug_assert_eq!(tape.value(h4).dim(), (cfg.l, cfg.d1));
                let flat = tape.reshape(h4, 1, cfg.l * cfg.d1);
                tape.matmul(flat, leaves.by_name["head.w"])
            }
            Mode::Baseline => unreachable!("handled above"),
        };
        Ok(tape.add(logits, leaves.by_name["head.b"]))
    }
}
