//! Second-order biased random walks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::chargraph::AdvGraph;
use crate::error::Result;

use super::WalkConfig;

/// One transition of the second-order walk at `cur`, having arrived from
/// `prev`. Candidate `x` is weighted 1/p when x = prev, 1 when x is adjacent
/// to prev, 1/q otherwise. Returns `None` at dead ends (no neighbors or no
/// transition mass).
pub fn biased_step(
    graph: &AdvGraph,
    prev: char,
    cur: char,
    p: f64,
    q: f64,
    rng: &mut impl Rng,
) -> Option<char> {
    let nbrs = graph.adjacency_of(cur)?;
    if nbrs.is_empty() {
        return None;
    }
    let weights: Vec<f64> = nbrs
        .iter()
        .map(|&(x, _, _)| {
            if x == prev {
                1.0 / p
            } else if graph.edge(x, prev).is_some() {
                1.0
            } else {
                1.0 / q
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return None;
    }
    let mut draw = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        draw -= w;
        if draw <= 0.0 {
            return Some(nbrs[i].0);
        }
    }
    // floating-point shortfall: take the last candidate
    Some(nbrs.last().unwrap().0)
}

fn walk_from(graph: &AdvGraph, start: char, cfg: &WalkConfig, rng: &mut impl Rng) -> Vec<char> {
    let mut walk = Vec::with_capacity(cfg.walk_length);
    walk.push(start);
    let first = {
        let nbrs = graph.adjacency_of(start).unwrap_or(&[]);
        if nbrs.is_empty() {
            return walk;
        }
        nbrs[rng.random_range(0..nbrs.len())].0
    };
    walk.push(first);
    while walk.len() < cfg.walk_length {
        let prev = walk[walk.len() - 2];
        let cur = walk[walk.len() - 1];
        match biased_step(graph, prev, cur, cfg.p, cfg.q, rng) {
            Some(next) => walk.push(next),
            None => break,
        }
    }
    walk
}

/// `walks_per_node` walks from every node, in codepoint order. Isolated
/// nodes yield length-1 walks so the trained table still covers them. Each
/// walk runs on its own generator seeded `cfg.seed ^ node_index ^
/// walk_index`, so the output is identical no matter how the work is
/// scheduled.
pub fn generate_walks(graph: &AdvGraph, cfg: &WalkConfig) -> Result<Vec<Vec<char>>> {
    cfg.validate()?;
    let nodes: Vec<char> = graph.nodes().collect();
    let walks: Vec<Vec<char>> = nodes
        .par_iter()
        .enumerate()
        .flat_map_iter(|(ni, &start)| {
            let cfg = cfg.clone();
            (0..cfg.walks_per_node).map(move |wi| {
                let seed = cfg.seed ^ (ni as u64) ^ (wi as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                (ni, wi, walk_from(graph, start, &cfg, &mut rng))
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .map(|(_, _, w)| w)
        .collect();
    Ok(walks)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeSet;

    use super::*;
    use crate::chargraph::{build_graph, CharacterRecord};

    fn rec(c: char, pys: &[&str], code: &[u8]) -> CharacterRecord {
        CharacterRecord {
            codepoint: c,
            pinyins: pys.iter().map(|s| s.to_string()).collect(),
            stroke_code: code.to_vec(),
            frequency_rank: None,
            visual_feature: None,
        }
    }

    /// Path graph 一—二—三 via shared readings; distinct stroke codes keep
    /// glyph edges out.
    fn path_graph() -> AdvGraph {
        let recs = vec![
            rec('一', &["ab"], &[1, 1, 1, 1, 1, 1]),
            rec('二', &["ab", "bc"], &[2, 3, 2, 3, 2, 3]),
            rec('三', &["bc"], &[4, 5, 4, 5, 4, 5]),
        ];
        build_graph(&recs, 0.99, usize::MAX).unwrap()
    }

    #[test]
    fn uniform_bias_on_path_midpoint() {
        let g = path_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = std::collections::HashMap::new();
        for _ in 0..4000 {
            let next = biased_step(&g, '一', '二', 1.0, 1.0, &mut rng).unwrap();
            *counts.entry(next).or_insert(0usize) += 1;
        }
        let a = counts[&'一'] as f64;
        let c = counts[&'三'] as f64;
        // p=q=1: both next steps weighted 1; expect roughly 50/50
        assert!((a / (a + c) - 0.5).abs() < 0.05, "split {a}/{c}");
    }

    #[test]
    fn extreme_p_q_starves_all_moves() {
        let g = path_graph();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // at 二 from 一: candidates are 一 (1/p) and 三 (1/q, not adjacent to 一)
        let next = biased_step(&g, '一', '二', 1e300, 1.0, &mut rng).unwrap();
        assert_eq!(next, '三');
        let next = biased_step(&g, '一', '二', 1.0, 1e300, &mut rng).unwrap();
        assert_eq!(next, '一');
        // finite-huge p and q leave equal subnormal mass: renormalization
        // still picks a neighbor
        assert!(biased_step(&g, '一', '二', f64::MAX, f64::MAX, &mut rng).is_some());
        // at the infinite limit no mass is left and the walk dies
        assert_eq!(biased_step(&g, '一', '二', f64::INFINITY, f64::INFINITY, &mut rng), None);
    }

    #[test]
    fn walk_counts_and_lengths() {
        let g = path_graph();
        let cfg = WalkConfig { walk_length: 6, walks_per_node: 4, window: 2, ..WalkConfig::default() };
        let walks = generate_walks(&g, &cfg).unwrap();
        assert_eq!(walks.len(), 3 * 4);
        for w in &walks {
            assert!(!w.is_empty() && w.len() <= 6);
            for pair in w.windows(2) {
                assert!(g.edge(pair[0], pair[1]).is_some(), "non-edge step {pair:?}");
            }
        }
        let starts: BTreeSet<char> = walks.iter().map(|w| w[0]).collect();
        assert_eq!(starts.len(), 3);
    }

    #[test]
    fn isolated_nodes_get_single_node_walks() {
        let recs = vec![
            rec('一', &["ab"], &[1, 1, 1]),
            rec('二', &["ab"], &[1, 1, 2]),
            rec('孤', &["gu"], &[5, 5, 5]),
        ];
        let g = build_graph(&recs, 0.9, usize::MAX).unwrap();
        let cfg = WalkConfig { walk_length: 4, walks_per_node: 2, window: 2, ..WalkConfig::default() };
        let walks = generate_walks(&g, &cfg).unwrap();
        let lone: Vec<_> = walks.iter().filter(|w| w[0] == '孤').collect();
        assert_eq!(lone.len(), 2);
        assert!(lone.iter().all(|w| w.len() == 1));
    }

    #[test]
    fn walks_are_deterministic() {
        let g = path_graph();
        let cfg = WalkConfig { walk_length: 8, walks_per_node: 5, window: 3, seed: 42, ..WalkConfig::default() };
        assert_eq!(generate_walks(&g, &cfg).unwrap(), generate_walks(&g, &cfg).unwrap());
    }
}
