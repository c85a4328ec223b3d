//! Inference path: tape-free batched forward.
//!
//! Position-wise linear maps run on the whole batch at once by stacking
//! every sample's `l` rows into one (B·l)×d matrix; attention and the
//! per-sample flattens slice that stack back apart. The arithmetic mirrors
//! the tape forward exactly, op for op.

use ndarray::{s, Array2};

use crate::error::Result;
use crate::nn::{layer_norm_rows_inplace, softmax_rows_inplace};

use super::{FusionModel, Mode};

pub(crate) struct BatchOutputs {
    /// B×n_classes
    pub probs: Array2<f64>,
    /// (B·l)×d1, LM output rows per sample
    pub h1: Array2<f64>,
    /// B×d1, absent in baseline mode
    pub h3: Option<Array2<f64>>,
    /// (B·l)×d1, full fusion only
    pub h4: Option<Array2<f64>>,
}

impl FusionModel {
    fn encoder_layer_batch(&self, prefix: &str, x: Array2<f64>, lens: &[usize], d: usize) -> Array2<f64> {
        let p = |name: &str| self.params.get(&format!("{prefix}.{name}"));
        let cfg = &self.config;
        let (l, heads) = (cfg.l, cfg.lm_heads);
        let dk = d / heads;
        let scale = 1.0 / (dk as f64).sqrt();

        let q = x.dot(p("wq"));
        let k = x.dot(p("wk"));
        let v = x.dot(p("wv"));
        let mut ctx = Array2::zeros((x.nrows(), d));
        for (s_idx, &n) in lens.iter().enumerate() {
            let rows = s![s_idx * l..(s_idx + 1) * l, ..];
            for h in 0..heads {
                let cols = s![.., h * dk..(h + 1) * dk];
                let qh = q.slice(rows).slice_move(cols);
                let kh = k.slice(rows).slice_move(cols);
                let vh = v.slice(rows).slice_move(cols);
                let mut sc = qh.dot(&kh.t());
                sc.mapv_inplace(|x| x * scale);
                for mut row in sc.rows_mut() {
                    for j in n..l {
                        row[j] += -1e9;
                    }
                }
                softmax_rows_inplace(&mut sc);
                let ah = sc.dot(&vh);
                ctx.slice_mut(s![s_idx * l..(s_idx + 1) * l, h * dk..(h + 1) * dk]).assign(&ah);
            }
        }
        let attn = ctx.dot(p("wo"));
        let mut x = x + attn;
        layer_norm_rows_inplace(&mut x, 1e-5);
        let mut x = x * &p("ln1_g").row(0);
        x += &p("ln1_b").row(0);

        let mut ff = x.dot(p("ff1_w"));
        ff += &p("ff1_b").row(0);
        ff.mapv_inplace(|v| v.max(0.0));
        let mut ff = ff.dot(p("ff2_w"));
        ff += &p("ff2_b").row(0);
        let mut x = x + ff;
        layer_norm_rows_inplace(&mut x, 1e-5);
        let mut x = x * &p("ln2_g").row(0);
        x += &p("ln2_b").row(0);
        x
    }

    /// Rows `s·l..(s+1)·l` of `stack` flattened row-major into row `s`.
    fn flatten_per_sample(&self, stack: &Array2<f64>, batch: usize) -> Array2<f64> {
        let l = self.config.l;
        let width = l * stack.ncols();
        let mut out = Array2::zeros((batch, width));
        for s_idx in 0..batch {
            let block = stack.slice(s![s_idx * l..(s_idx + 1) * l, ..]);
            for (j, v) in block.iter().enumerate() {
                out[[s_idx, j]] = *v;
            }
        }
        out
    }

    pub(crate) fn forward_batch(&self, texts: &[&str]) -> Result<BatchOutputs> {
        assert!(!texts.is_empty(), "forward_batch requires at least one text");
        let cfg = &self.config;
        let (b, l, d1, d2) = (texts.len(), cfg.l, cfg.d1, cfg.d2);

        let mut lens = Vec::with_capacity(b);
        let mut all_tokens = Vec::with_capacity(b);
        for t in texts {
            let (tokens, n) = self.tokens_of(t)?;
            all_tokens.push(tokens);
            lens.push(n);
        }

        // token + position embeddings, stacked
        let embed = self.params.get("lm.embed");
        let pos = self.params.get("lm.pos");
        let mut h1 = Array2::zeros((b * l, d1));
        for (s_idx, tokens) in all_tokens.iter().enumerate() {
            for (i, &tok) in tokens.iter().enumerate() {
                let mut row = h1.row_mut(s_idx * l + i);
                row.assign(&embed.row(tok));
                row += &pos.row(i);
            }
        }
        for i in 0..cfg.lm_layers {
            h1 = self.encoder_layer_batch(&format!("lm.{i}"), h1, &lens, d1);
        }

        if cfg.mode == Mode::Baseline {
            let flat = self.flatten_per_sample(&h1, b);
            let mut logits = flat.dot(self.params.get("head.w"));
            logits += &self.params.get("head.b").row(0);
            softmax_rows_inplace(&mut logits);
            return Ok(BatchOutputs { probs: logits, h1, h3: None, h4: None });
        }

        let mut t1x = Array2::zeros((b * l, d2));
        for (s_idx, t) in texts.iter().enumerate() {
            let h2 = self.h2_of(t)?;
            t1x.slice_mut(s![s_idx * l..(s_idx + 1) * l, ..]).assign(&h2);
        }
        for i in 0..cfg.t1_layers {
            t1x = self.encoder_layer_batch(&format!("t1.{i}"), t1x, &lens, d2);
        }
        let flat2 = self.flatten_per_sample(&t1x, b);
        let mut h3 = flat2.dot(self.params.get("proj.w"));
        h3 += &self.params.get("proj.b").row(0);

        // concat [H1 | H'3] per position
        let mut cat = Array2::zeros((b * l, 2 * d1));
        cat.slice_mut(s![.., ..d1]).assign(&h1);
        for s_idx in 0..b {
            for i in 0..l {
                cat.slice_mut(s![s_idx * l + i, d1..]).assign(&h3.row(s_idx));
            }
        }

        let (flat_head, h4) = match cfg.mode {
            Mode::GraphConcat => (self.flatten_per_sample(&cat, b), None),
            Mode::FullFusion => {
                let mut h4 = cat.dot(self.params.get("fuse.w"));
                for i in 0..cfg.t2_layers {
                    h4 = self.encoder_layer_batch(&format!("t2.{i}"), h4, &lens, d1);
                }
                (self.flatten_per_sample(&h4, b), Some(h4))
            }
            Mode::Baseline => unreachable!("handled above"),
        };
        let mut logits = flat_head.dot(self.params.get("head.w"));
        logits += &self.params.get("head.b").row(0);
        softmax_rows_inplace(&mut logits);
        Ok(BatchOutputs { probs: logits, h1, h3: Some(h3), h4 })
    }
}
