//! Skip-gram with negative sampling over walk corpora.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::{EmbeddingTable, WalkConfig};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Negative-sampling loss and analytic gradients for one (center, context,
/// negatives) triple:
///
/// ```text
/// L = -log σ(v·u_ctx) - Σ_n log σ(-v·u_n)
/// ```
///
/// Returns `(loss, d/d_center, d/d_context, d/d_negatives)`. The training
/// loop applies exactly these gradients; tests compare them against central
/// finite differences.
pub fn sgns_loss_and_grads(
    center: &[f64],
    context: &[f64],
    negatives: &[Vec<f64>],
) -> (f64, Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let dim = center.len();
    assert_eq!(context.len(), dim);
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let s_pos = sigmoid(dot(center, context));
    let mut loss = -s_pos.max(f64::MIN_POSITIVE).ln();
    let mut g_center = vec![0.0; dim];
    let g_pos = s_pos - 1.0;
    let g_context: Vec<f64> = center.iter().map(|v| g_pos * v).collect();
    for d in 0..dim {
        g_center[d] += g_pos * context[d];
    }

    let mut g_negatives = Vec::with_capacity(negatives.len());
    for neg in negatives {
        assert_eq!(neg.len(), dim);
        let s_neg = sigmoid(dot(center, neg));
        loss -= (1.0 - s_neg).max(f64::MIN_POSITIVE).ln();
        g_negatives.push(center.iter().map(|v| s_neg * v).collect::<Vec<f64>>());
        for d in 0..dim {
            g_center[d] += s_neg * neg[d];
        }
    }
    (loss, g_center, g_context, g_negatives)
}

struct NegativeSampler {
    /// Cumulative unigram^(3/4) mass per vocab index.
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    fn new(counts: &[usize]) -> NegativeSampler {
        let mut cumulative = Vec::with_capacity(counts.len());
        let mut acc = 0.0;
        for &c in counts {
            acc += (c as f64).powf(0.75);
            cumulative.push(acc);
        }
        NegativeSampler { cumulative }
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        let total = *self.cumulative.last().expect("nonempty vocab");
        let r = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= r).min(self.cumulative.len() - 1)
    }
}

/// Trains skip-gram vectors over the walks. Single-threaded on purpose: the
/// update order is part of the determinism contract. Learning rate decays
/// linearly over all processed pairs with a 1e-4 floor; input vectors start
/// uniform in ±0.5/dim, context vectors at zero, both seeded from
/// `cfg.seed`. The returned table holds the input vectors.
pub fn train_embeddings(walks: &[Vec<char>], cfg: &WalkConfig, dim: usize) -> Result<EmbeddingTable> {
    if walks.is_empty() {
        return Err(Error::invalid("cannot train embeddings on an empty walk set"));
    }
    if dim < 2 {
        return Err(Error::invalid(format!("embedding dimension must be at least 2, got {dim}")));
    }
    cfg.validate()?;

    let mut vocab_counts: BTreeMap<char, usize> = BTreeMap::new();
    for walk in walks {
        for &c in walk {
            *vocab_counts.entry(c).or_insert(0) += 1;
        }
    }
    let vocab: Vec<char> = vocab_counts.keys().copied().collect();
    let index: BTreeMap<char, usize> = vocab.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let counts: Vec<usize> = vocab.iter().map(|c| vocab_counts[c]).collect();
    let sampler = NegativeSampler::new(&counts);
    let n = vocab.len();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut input: Vec<f64> = (0..n * dim).map(|_| (rng.random::<f64>() - 0.5) / dim as f64).collect();
    let mut output: Vec<f64> = vec![0.0; n * dim];

    let pairs_in = |len: usize| -> u64 {
        (0..len)
            .map(|i| {
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(len - 1);
                (hi - lo) as u64
            })
            .sum()
    };
    let total_pairs: u64 = (cfg.epochs as u64) * walks.iter().map(|w| pairs_in(w.len())).sum::<u64>();
    let mut processed: u64 = 0;

    let mut neu1e = vec![0.0; dim];
    for _ in 0..cfg.epochs {
        for walk in walks {
            let ids: Vec<usize> = walk.iter().map(|c| index[c]).collect();
            for (i, &center) in ids.iter().enumerate() {
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window).min(ids.len() - 1);
                for j in lo..=hi {
                    if j == i {
                        continue;
                    }
                    let context = ids[j];
                    let frac = 1.0 - processed as f64 / total_pairs.max(1) as f64;
                    let alpha = cfg.learning_rate * frac.max(1e-4);
                    processed += 1;

                    neu1e.iter_mut().for_each(|x| *x = 0.0);
                    let v = center * dim;
                    // positive pair plus `negatives` draws; draws that hit
                    // the positive context are skipped, not redrawn
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let t = sampler.draw(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, 0.0)
                        };
                        let u = target * dim;
                        let dot: f64 = (0..dim).map(|d| input[v + d] * output[u + d]).sum();
                        let g = (label - sigmoid(dot)) * alpha;
                        for d in 0..dim {
                            neu1e[d] += g * output[u + d];
                            output[u + d] += g * input[v + d];
                        }
                    }
                    for d in 0..dim {
                        input[v + d] += neu1e[d];
                    }
                }
            }
        }
    }

    let mut vectors = BTreeMap::new();
    for (i, &c) in vocab.iter().enumerate() {
        vectors.insert(c, input[i * dim..(i + 1) * dim].to_vec());
    }
    EmbeddingTable::new(dim, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chargraph::{build_graph, CharacterRecord};
    use crate::embedding::{cosine, generate_walks};

    fn rec(c: char, pys: &[&str], code: &[u8]) -> CharacterRecord {
        CharacterRecord {
            codepoint: c,
            pinyins: pys.iter().map(|s| s.to_string()).collect(),
            stroke_code: code.to_vec(),
            frequency_rank: None,
            visual_feature: None,
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = 6;
        let mk = |rng: &mut ChaCha8Rng| (0..dim).map(|_| rng.random::<f64>() - 0.5).collect::<Vec<f64>>();
        let center = mk(&mut rng);
        let context = mk(&mut rng);
        let negatives = vec![mk(&mut rng), mk(&mut rng)];
        let (_, g_c, g_ctx, g_negs) = sgns_loss_and_grads(&center, &context, &negatives);

        let eps = 1e-6;
        let check = |analytic: f64, mut bump: Box<dyn FnMut(f64) -> f64>| {
            let fd = (bump(eps) - bump(-eps)) / (2.0 * eps);
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            assert!(
                ((analytic - fd) / denom).abs() < 1e-4,
                "analytic {analytic} vs finite-difference {fd}"
            );
        };
        for d in 0..dim {
            let (c, ctx, negs) = (center.clone(), context.clone(), negatives.clone());
            check(
                g_c[d],
                Box::new(move |e| {
                    let mut c2 = c.clone();
                    c2[d] += e;
                    sgns_loss_and_grads(&c2, &ctx, &negs).0
                }),
            );
            let (c, ctx, negs) = (center.clone(), context.clone(), negatives.clone());
            check(
                g_ctx[d],
                Box::new(move |e| {
                    let mut ctx2 = ctx.clone();
                    ctx2[d] += e;
                    sgns_loss_and_grads(&c, &ctx2, &negs).0
                }),
            );
            for (ni, g_neg) in g_negs.iter().enumerate() {
                let (c, ctx, negs) = (center.clone(), context.clone(), negatives.clone());
                check(
                    g_neg[d],
                    Box::new(move |e| {
                        let mut negs2 = negs.clone();
                        negs2[ni][d] += e;
                        sgns_loss_and_grads(&c, &ctx, &negs2).0
                    }),
                );
            }
        }
    }

    /// Two 5-cliques (shared reading within each, disjoint stroke codes
    /// across): intra-clique cosine must beat inter-clique cosine.
    #[test]
    fn cliques_separate_in_embedding_space() {
        let one: Vec<char> = "一二三四五".chars().collect();
        let two: Vec<char> = "六七八九十".chars().collect();
        let mut recs = Vec::new();
        for &c in &one {
            recs.push(rec(c, &["ka"], &[1, 2, 1, 2]));
        }
        for &c in &two {
            recs.push(rec(c, &["lo"], &[3, 4, 3, 4]));
        }
        let g = build_graph(&recs, 0.99, usize::MAX).unwrap();
        assert_eq!(g.edge_count(), 20); // two K5s

        let cfg = WalkConfig { walk_length: 10, walks_per_node: 20, window: 3, epochs: 5, seed: 3, ..WalkConfig::default() };
        let walks = generate_walks(&g, &cfg).unwrap();
        let table = train_embeddings(&walks, &cfg, 16).unwrap();

        let mean_cos = |xs: &[char], ys: &[char], skip_same: bool| -> f64 {
            let mut acc = 0.0;
            let mut n = 0;
            for &x in xs {
                for &y in ys {
                    if skip_same && x == y {
                        continue;
                    }
                    acc += cosine(table.get(x).unwrap(), table.get(y).unwrap());
                    n += 1;
                }
            }
            acc / n as f64
        };
        let intra = (mean_cos(&one, &one, true) + mean_cos(&two, &two, true)) / 2.0;
        let inter = mean_cos(&one, &two, false);
        assert!(intra > inter, "intra {intra} should exceed inter {inter}");
    }

    #[test]
    fn single_edge_pair_is_closer_than_noise_vector() {
        let recs = vec![rec('博', &["bo"], &[1, 2, 3]), rec('菠', &["bo"], &[4, 5, 1])];
        let g = build_graph(&recs, 0.99, usize::MAX).unwrap();
        let mut wins = 0;
        for seed in 0..10u64 {
            let cfg =
                WalkConfig { walk_length: 8, walks_per_node: 10, window: 2, seed, ..WalkConfig::default() };
            let walks = generate_walks(&g, &cfg).unwrap();
            let table = train_embeddings(&walks, &cfg, 2).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1000));
            let noise: Vec<f64> = (0..2).map(|_| rng.random::<f64>() - 0.5).collect();
            if cosine(table.get('博').unwrap(), table.get('菠').unwrap())
                > cosine(table.get('博').unwrap(), &noise)
            {
                wins += 1;
            }
        }
        assert!(wins > 5, "connected pair beat noise only {wins}/10 times");
    }

    #[test]
    fn training_is_deterministic_and_finite() {
        let recs = vec![
            rec('博', &["bo"], &[1, 2, 3]),
            rec('菠', &["bo"], &[4, 5, 1]),
            rec('波', &["bo"], &[2, 2, 2]),
        ];
        let g = build_graph(&recs, 0.99, usize::MAX).unwrap();
        let cfg = WalkConfig { walk_length: 6, walks_per_node: 5, window: 2, seed: 9, ..WalkConfig::default() };
        let walks = generate_walks(&g, &cfg).unwrap();
        let t1 = train_embeddings(&walks, &cfg, 8).unwrap();
        let t2 = train_embeddings(&walks, &cfg, 8).unwrap();
        for c in t1.chars() {
            let (a, b) = (t1.get(c).unwrap(), t2.get(c).unwrap());
            assert!(a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
            assert!(a.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn empty_walks_rejected() {
        assert!(train_embeddings(&[], &WalkConfig::default(), 8).is_err());
    }
}
