//! Named parameter storage in a fixed declared order.
//!
//! The declared order is load-bearing: seeded initialization draws in this
//! order, checkpoints serialize in this order, and training walks it when
//! applying gradients, so any reordering would silently change models.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FusionConfig, Mode};

pub(crate) struct ParamSet {
    entries: Vec<(String, Array2<f64>)>,
    index: std::collections::BTreeMap<String, usize>,
}

impl ParamSet {
    pub fn get(&self, name: &str) -> &Array2<f64> {
        let i = self.index[name];
        &self.entries[i].1
    }

    pub fn get_mut(&mut self, name: &str) -> &mut Array2<f64> {
        let i = self.index[name];
        &mut self.entries[i].1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.entries.iter().map(|(n, a)| (n.as_str(), a))
    }

    #[cfg(test)]
    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|(n, _)| n.clone()).collect()
    }

    pub fn from_entries(entries: Vec<(String, Array2<f64>)>) -> ParamSet {
        let index = entries.iter().enumerate().map(|(i, (n, _))| (n.clone(), i)).collect();
        ParamSet { entries, index }
    }
}

fn encoder_layer_shapes(prefix: &str, d: usize, out: &mut Vec<(String, (usize, usize))>) {
    for (suffix, shape) in [
        ("wq", (d, d)),
        ("wk", (d, d)),
        ("wv", (d, d)),
        ("wo", (d, d)),
        ("ln1_g", (1, d)),
        ("ln1_b", (1, d)),
        ("ff1_w", (d, 2 * d)),
        ("ff1_b", (1, 2 * d)),
        ("ff2_w", (2 * d, d)),
        ("ff2_b", (1, d)),
        ("ln2_g", (1, d)),
        ("ln2_b", (1, d)),
    ] {
        out.push((format!("{prefix}.{suffix}"), shape));
    }
}

/// Every parameter name and shape for a config, in declared order.
pub(crate) fn expected_shapes(cfg: &FusionConfig, vocab_len: usize) -> Vec<(String, (usize, usize))> {
    let mut out = Vec::new();
    out.push(("lm.embed".to_string(), (vocab_len, cfg.d1)));
    out.push(("lm.pos".to_string(), (cfg.l, cfg.d1)));
    for i in 0..cfg.lm_layers {
        encoder_layer_shapes(&format!("lm.{i}"), cfg.d1, &mut out);
    }
    if cfg.mode != Mode::Baseline {
        for i in 0..cfg.t1_layers {
            encoder_layer_shapes(&format!("t1.{i}"), cfg.d2, &mut out);
        }
        out.push(("proj.w".to_string(), (cfg.l * cfg.d2, cfg.d1)));
        out.push(("proj.b".to_string(), (1, cfg.d1)));
    }
    if cfg.mode == Mode::FullFusion {
        out.push(("fuse.w".to_string(), (2 * cfg.d1, cfg.d1)));
        for i in 0..cfg.t2_layers {
            encoder_layer_shapes(&format!("t2.{i}"), cfg.d1, &mut out);
        }
    }
    out.push(("head.w".to_string(), (cfg.head_input(), cfg.n_classes)));
    out.push(("head.b".to_string(), (1, cfg.n_classes)));
    out
}

/// Seeded initialization: Xavier-uniform matrices, zero biases, unit layer
/// norm gains. Draw order follows the declared parameter order.
pub(crate) fn init(cfg: &FusionConfig, vocab_len: usize) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let entries = expected_shapes(cfg, vocab_len)
        .into_iter()
        .map(|(name, (r, c))| {
            let arr = if name.ends_with("_g") {
                Array2::ones((r, c))
            } else if name.ends_with("_b") || name.ends_with(".b") {
                Array2::zeros((r, c))
            } else {
                let limit = (6.0 / (r + c) as f64).sqrt();
                Array2::from_shape_fn((r, c), |_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
            };
            (name, arr)
        })
        .collect();
    ParamSet::from_entries(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn declared_order_by_mode() {
        let base = FusionConfig { mode: Mode::Baseline, ..FusionConfig::default() };
        let names: Vec<String> = init(&base, 10).names();
        assert!(names.iter().all(|n| n.starts_with("lm.") || n.starts_with("head.")));
        assert_eq!(names.last().unwrap(), "head.b");

        let concat = FusionConfig { mode: Mode::GraphConcat, ..FusionConfig::default() };
        let names = init(&concat, 10).names();
        assert!(names.iter().any(|n| n == "proj.w"));
        assert!(!names.iter().any(|n| n == "fuse.w"));

        let full = FusionConfig { mode: Mode::FullFusion, ..FusionConfig::default() };
        let names = init(&full, 10).names();
        assert!(names.iter().any(|n| n == "fuse.w"));
        assert!(names.iter().any(|n| n.starts_with("t2.0.")));
    }

    #[test]
    fn head_width_depends_on_mode() {
        let cfg = FusionConfig { mode: Mode::GraphConcat, ..FusionConfig::default() };
        let shapes = expected_shapes(&cfg, 10);
        let head = shapes.iter().find(|(n, _)| n == "head.w").unwrap();
        assert_eq!(head.1 .0, 2 * cfg.l * cfg.d1);
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = FusionConfig::default();
        let a = init(&cfg, 10);
        let b = init(&cfg, 10);
        for ((_, x), (_, y)) in a.iter().zip(b.iter()) {
            assert!(x.iter().zip(y.iter()).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }
}
