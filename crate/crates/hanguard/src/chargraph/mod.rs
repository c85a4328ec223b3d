//! The phonetic/glyph adversarial character graph.
//!
//! Nodes are Chinese characters; an edge marks a pair that sounds alike
//! (shares a toneless pinyin), looks alike (stroke-code similarity at or
//! above a threshold), or both. Neighbor lists feed candidate generation for
//! the substitution attacks.

mod serial;
mod similarity;
mod table;

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};

pub use similarity::{glyph_similarity, lcs_len, SimilarityWeights};
pub use table::{attach_visual_features, is_cjk_ideograph, load_character_table, load_visual_features};
pub(crate) use table::{format_codepoint, parse_codepoint};

/// One character's raw data: readings, stroke-class code, optional
/// frequency rank and optional externally supplied visual feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterRecord {
    pub codepoint: char,
    /// Toneless readings, lowercase ASCII (ü written v).
    pub pinyins: BTreeSet<String>,
    /// Stroke classes as digits 1..=9; the bundled table uses the classic
    /// five classes 1..=5.
    pub stroke_code: Vec<u8>,
    pub frequency_rank: Option<u32>,
    pub visual_feature: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum EdgeKind {
    Phonetic,
    Glyph,
    Both,
}

impl EdgeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeKind::Phonetic => "phonetic",
            EdgeKind::Glyph => "glyph",
            EdgeKind::Both => "both",
        }
    }

    pub fn is_phonetic(&self) -> bool {
        matches!(self, EdgeKind::Phonetic | EdgeKind::Both)
    }

    pub fn is_glyph(&self) -> bool {
        matches!(self, EdgeKind::Glyph | EdgeKind::Both)
    }
}

/// Neighbor filter for [`AdvGraph::neighbors`]. `Phonetic`/`Glyph` include
/// `both`-kind edges, which satisfy either relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeighborFilter {
    #[default]
    All,
    Phonetic,
    Glyph,
}

/// Graph construction knobs beyond the two required by [`build_graph`].
#[derive(Debug, Clone)]
pub struct GraphConfig {
    /// Minimum glyph similarity for a glyph edge, in (0, 1].
    pub glyph_threshold: f64,
    /// Per-node neighbor-list length cap (a build-time view; the edge set
    /// itself is never truncated).
    pub candidate_cap: usize,
    pub weights: SimilarityWeights,
    /// Opt-in fuzzy initial matching: zh/z, ch/c, sh/s, n/l.
    pub fuzzy_initials: bool,
    /// Records with a frequency rank beyond this cutoff keep their node but
    /// get no edges.
    pub freq_cutoff: Option<u32>,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig {
            glyph_threshold: 0.5,
            candidate_cap: usize::MAX,
            weights: SimilarityWeights::default(),
            fuzzy_initials: false,
            freq_cutoff: None,
        }
    }
}

/// The adversarial graph. Immutable once built; all iteration orders are
/// deterministic (codepoint-sorted, scores descending within a neighbor
/// list).
#[derive(Debug, Clone)]
pub struct AdvGraph {
    /// Full records when built from a table; empty after deserialization,
    /// which stores topology and scores only.
    records: BTreeMap<char, CharacterRecord>,
    nodes: BTreeSet<char>,
    /// Canonical (lo, hi) pair -> kind and similarity score.
    edges: BTreeMap<(char, char), (EdgeKind, f64)>,
    /// Score-descending neighbor lists, truncated to the build-time cap.
    adjacency: BTreeMap<char, Vec<(char, f64, EdgeKind)>>,
}

fn canonical(a: char, b: char) -> (char, char) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Applies the fuzzy-initial merge: zh→z, ch→c, sh→s, n→l at the syllable
/// start.
fn fuzzy_normalize(py: &str) -> String {
    for (from, to) in [("zh", "z"), ("ch", "c"), ("sh", "s"), ("n", "l")] {
        if let Some(rest) = py.strip_prefix(from) {
            return format!("{to}{rest}");
        }
    }
    py.to_string()
}

fn share_pinyin(a: &CharacterRecord, b: &CharacterRecord, fuzzy: bool) -> bool {
    if fuzzy {
        let norm_a: BTreeSet<String> = a.pinyins.iter().map(|p| fuzzy_normalize(p)).collect();
        b.pinyins.iter().any(|p| norm_a.contains(&fuzzy_normalize(p)))
    } else {
        a.pinyins.iter().any(|p| b.pinyins.contains(p))
    }
}

/// Builds the graph with default weights and no frequency cutoff.
pub fn build_graph(records: &[CharacterRecord], glyph_threshold: f64, candidate_cap: usize) -> Result<AdvGraph> {
    build_graph_with(
        records,
        &GraphConfig { glyph_threshold, candidate_cap, ..GraphConfig::default() },
    )
}

/// Builds the graph: every pair sharing a toneless pinyin gets a phonetic
/// edge, every pair at or above the glyph threshold gets a glyph edge, pairs
/// qualifying for both are tagged `both`. Every edge carries the glyph
/// similarity as its score, so neighbor ordering has a single semantics
/// (phonetic-only edges may score below the threshold).
pub fn build_graph_with(records: &[CharacterRecord], cfg: &GraphConfig) -> Result<AdvGraph> {
    if records.is_empty() {
        return Err(Error::invalid("cannot build a graph from zero records"));
    }
    if !(cfg.glyph_threshold > 0.0 && cfg.glyph_threshold <= 1.0) {
        return Err(Error::invalid(format!(
            "glyph_threshold must lie in (0, 1], got {}",
            cfg.glyph_threshold
        )));
    }
    if cfg.candidate_cap == 0 {
        return Err(Error::invalid("candidate_cap must be at least 1"));
    }
    if !(0.0..=1.0).contains(&cfg.weights.lcs_weight) {
        return Err(Error::invalid(format!("lcs_weight must lie in [0, 1], got {}", cfg.weights.lcs_weight)));
    }
    let mut store: BTreeMap<char, CharacterRecord> = BTreeMap::new();
    for rec in records {
        if store.insert(rec.codepoint, rec.clone()).is_some() {
            return Err(Error::invalid(format!(
                "duplicate record for {}",
                table::format_codepoint(rec.codepoint)
            )));
        }
    }

    let eligible: Vec<&CharacterRecord> = store
        .values()
        .filter(|r| match (cfg.freq_cutoff, r.frequency_rank) {
            (Some(cut), Some(rank)) => rank <= cut,
            _ => true,
        })
        .collect();

    // All-pairs scoring; parallel over the first index. Edge-set semantics
    // make the result independent of scheduling.
    let edge_lists: Vec<Vec<((char, char), (EdgeKind, f64))>> = eligible
        .par_iter()
        .enumerate()
        .map(|(i, a)| {
            let mut out = Vec::new();
            for b in &eligible[i + 1..] {
                let phonetic = share_pinyin(a, b, cfg.fuzzy_initials);
                let score = glyph_similarity(a, b, &cfg.weights);
                let glyph = score >= cfg.glyph_threshold;
                let kind = match (phonetic, glyph) {
                    (true, true) => EdgeKind::Both,
                    (true, false) => EdgeKind::Phonetic,
                    (false, true) => EdgeKind::Glyph,
                    (false, false) => continue,
                };
                out.push((canonical(a.codepoint, b.codepoint), (kind, score)));
            }
            out
        })
        .collect();

    let mut edges = BTreeMap::new();
    for list in edge_lists {
        for (pair, tag) in list {
            edges.insert(pair, tag);
        }
    }
    let nodes: BTreeSet<char> = store.keys().copied().collect();
    let adjacency = build_adjacency(&nodes, &edges, cfg.candidate_cap);
    Ok(AdvGraph { records: store, nodes, edges, adjacency })
}

fn build_adjacency(
    nodes: &BTreeSet<char>,
    edges: &BTreeMap<(char, char), (EdgeKind, f64)>,
    cap: usize,
) -> BTreeMap<char, Vec<(char, f64, EdgeKind)>> {
    let mut adjacency: BTreeMap<char, Vec<(char, f64, EdgeKind)>> =
        nodes.iter().map(|&c| (c, Vec::new())).collect();
    for (&(a, b), &(kind, score)) in edges {
        adjacency.get_mut(&a).expect("edge endpoint in nodes").push((b, score, kind));
        adjacency.get_mut(&b).expect("edge endpoint in nodes").push((a, score, kind));
    }
    for list in adjacency.values_mut() {
        list.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap_or(std::cmp::Ordering::Equal).then(x.0.cmp(&y.0)));
        list.truncate(cap);
    }
    adjacency
}

impl AdvGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// (phonetic-only, glyph-only, both) edge counts.
    pub fn kind_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for (kind, _) in self.edges.values() {
            match kind {
                EdgeKind::Phonetic => counts.0 += 1,
                EdgeKind::Glyph => counts.1 += 1,
                EdgeKind::Both => counts.2 += 1,
            }
        }
        counts
    }

    pub fn contains(&self, c: char) -> bool {
        self.nodes.contains(&c)
    }

    pub fn nodes(&self) -> impl Iterator<Item = char> + '_ {
        self.nodes.iter().copied()
    }

    /// The record behind a node; absent on graphs loaded from disk, which
    /// carry topology only.
    pub fn record(&self, c: char) -> Option<&CharacterRecord> {
        self.records.get(&c)
    }

    pub fn edge(&self, a: char, b: char) -> Option<(EdgeKind, f64)> {
        self.edges.get(&canonical(a, b)).copied()
    }

    pub fn edges(&self) -> impl Iterator<Item = (char, char, EdgeKind, f64)> + '_ {
        self.edges.iter().map(|(&(a, b), &(k, s))| (a, b, k, s))
    }

    /// Neighbors of `c`, score-descending (ties by ascending codepoint),
    /// truncated to the build-time cap, optionally filtered by kind.
    pub fn neighbors(&self, c: char, filter: NeighborFilter) -> Result<Vec<(char, f64)>> {
        let list = self
            .adjacency
            .get(&c)
            .ok_or_else(|| Error::invalid(format!("unknown codepoint {}", table::format_codepoint(c))))?;
        Ok(list
            .iter()
            .filter(|(_, _, kind)| match filter {
                NeighborFilter::All => true,
                NeighborFilter::Phonetic => kind.is_phonetic(),
                NeighborFilter::Glyph => kind.is_glyph(),
            })
            .map(|&(n, s, _)| (n, s))
            .collect())
    }

    /// Like [`neighbors`](Self::neighbors) but silent on unknown codepoints;
    /// candidate generation treats those as isolated.
    pub fn neighbors_or_empty(&self, c: char) -> Vec<(char, f64)> {
        self.neighbors(c, NeighborFilter::All).unwrap_or_default()
    }

    /// Raw capped neighbor list, kind included; used by the walk sampler.
    pub(crate) fn adjacency_of(&self, c: char) -> Option<&[(char, f64, EdgeKind)]> {
        self.adjacency.get(&c).map(|v| v.as_slice())
    }

    pub(crate) fn from_parts(
        nodes: BTreeSet<char>,
        edges: BTreeMap<(char, char), (EdgeKind, f64)>,
    ) -> AdvGraph {
        let adjacency = build_adjacency(&nodes, &edges, usize::MAX);
        AdvGraph { records: BTreeMap::new(), nodes, edges, adjacency }
    }
}

/// Record factory for unit tests elsewhere in the crate.
#[cfg(test)]
pub(crate) mod test_support {
    use super::CharacterRecord;

    pub(crate) fn rec(c: char, pys: &[&str], code: &[u8]) -> CharacterRecord {
        CharacterRecord {
            codepoint: c,
            pinyins: pys.iter().map(|s| s.to_string()).collect(),
            stroke_code: code.to_vec(),
            frequency_rank: None,
            visual_feature: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::test_support::rec;
    use super::*;

    #[test]
    fn single_record_graph_is_empty() {
        let g = build_graph(&[rec('博', &["bo"], &[1, 2, 3])], 0.5, usize::MAX).unwrap();
        assert_eq!(g.node_count(), 1);
        assert_eq!(g.edge_count(), 0);
        assert!(g.neighbors('博', NeighborFilter::All).unwrap().is_empty());
    }

    #[test]
    fn phonetic_and_glyph_kinds() {
        let recs = vec![
            rec('博', &["bo"], &[1, 2, 1, 2, 5]),
            rec('菠', &["bo"], &[3, 4, 4, 3, 3]),
            rec('们', &["men"], &[1, 2, 1, 2, 4]),
        ];
        let g = build_graph(&recs, 0.5, usize::MAX).unwrap();
        let (kind, _) = g.edge('博', '菠').unwrap();
        assert_eq!(kind, EdgeKind::Phonetic);
        // 博/们 share the 4-stroke prefix: lcs 4/5 = 0.8 ≥ 0.5, no shared reading.
        let (kind, score) = g.edge('博', '们').unwrap();
        assert_eq!(kind, EdgeKind::Glyph);
        assert!(score >= 0.5);
        assert_eq!(g.edge('菠', '们'), None);
    }

    #[test]
    fn both_kind_and_filters() {
        let recs = vec![rec('微', &["wei"], &[1, 2, 3, 4]), rec('薇', &["wei"], &[1, 2, 3, 4, 5])];
        let g = build_graph(&recs, 0.5, usize::MAX).unwrap();
        let (kind, score) = g.edge('微', '薇').unwrap();
        assert_eq!(kind, EdgeKind::Both);
        assert!((score - 0.8).abs() < 1e-12);
        assert_eq!(g.neighbors('微', NeighborFilter::Phonetic).unwrap().len(), 1);
        assert_eq!(g.neighbors('微', NeighborFilter::Glyph).unwrap().len(), 1);
    }

    #[test]
    fn neighbor_ordering_and_cap() {
        let recs = vec![
            rec('一', &["yi"], &[1, 1, 1, 1]),
            rec('二', &["er"], &[1, 1, 1, 2]),
            rec('三', &["san"], &[1, 1, 2, 2]),
            rec('四', &["si"], &[1, 1, 1, 1]),
        ];
        let g = build_graph(&recs, 0.5, usize::MAX).unwrap();
        let nbrs = g.neighbors('一', NeighborFilter::All).unwrap();
        assert_eq!(nbrs[0].0, '四'); // exact match scores 1.0
        assert!(nbrs.windows(2).all(|w| w[0].1 >= w[1].1));

        let capped = build_graph(&recs, 0.5, 1).unwrap();
        assert_eq!(capped.neighbors('一', NeighborFilter::All).unwrap().len(), 1);
        // the cap is a view; the edge set is untouched
        assert_eq!(capped.edge_count(), g.edge_count());
    }

    #[test]
    fn fuzzy_initials_opt_in() {
        let recs = vec![rec('知', &["zhi"], &[1, 1, 1]), rec('资', &["zi"], &[2, 2, 2])];
        let strict = build_graph_with(&recs, &GraphConfig::default()).unwrap();
        assert_eq!(strict.edge('知', '资'), None);
        let fuzzy =
            build_graph_with(&recs, &GraphConfig { fuzzy_initials: true, ..GraphConfig::default() }).unwrap();
        assert_eq!(fuzzy.edge('知', '资').unwrap().0, EdgeKind::Phonetic);
    }

    #[test]
    fn freq_cutoff_isolates_rare_records() {
        let mut a = rec('博', &["bo"], &[1, 2]);
        let mut b = rec('菠', &["bo"], &[1, 2]);
        a.frequency_rank = Some(10);
        b.frequency_rank = Some(900);
        let cfg = GraphConfig { freq_cutoff: Some(100), ..GraphConfig::default() };
        let g = build_graph_with(&[a, b], &cfg).unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn threshold_out_of_range_rejected() {
        let recs = vec![rec('博', &["bo"], &[1])];
        assert!(build_graph(&recs, 0.0, usize::MAX).is_err());
        assert!(build_graph(&recs, 1.5, usize::MAX).is_err());
    }
}
