//! Black-box word-substitution attacks.
//!
//! Three search strategies over the same move set: replace one character of
//! one word with a graph neighbor (similar pronunciation or shape), keeping
//! text length fixed.
//!
//! * `pwws`: scores every candidate against the original text once, then
//!   greedily commits the best substitute per word in saliency order.
//! * `textbugger`: ranks sentences by how weakly the classifier holds the
//!   true class on them alone, then inside each sentence ranks words by the
//!   confidence drop their removal causes, substituting as it goes.
//! * `random`: shuffles the words and substitutes random candidates.
//!
//! All three stop at the first label flip, when moves run out, or when the
//! next substitution would push the modification rate past `max_mr`. Every
//! committed step is recorded, which is what the curriculum augmentation
//! and the capped-rate evaluation feed on.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chargraph::AdvGraph;
use crate::classifier::Classifier;
use crate::dataset::LabeledText;
use crate::{Error, Result};

mod engines;
pub mod segment;

pub use segment::Segmenter;

/// Default sentence-terminal characters for the textbugger splitter.
pub const SENTENCE_TERMINALS: &[char] = &['。', '！', '？', '!', '?'];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Pwws,
    Textbugger,
    Random,
}

impl Algorithm {
    pub fn parse(s: &str) -> Result<Algorithm> {
        match s {
            "pwws" => Ok(Algorithm::Pwws),
            "textbugger" => Ok(Algorithm::Textbugger),
            "random" => Ok(Algorithm::Random),
            other => Err(Error::invalid(format!(
                "unknown attack algorithm {other:?} (expected pwws, textbugger or random)"
            ))),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Pwws => "pwws",
            Algorithm::Textbugger => "textbugger",
            Algorithm::Random => "random",
        }
    }
}

#[derive(Debug, Clone)]
pub struct AttackConfig {
    pub algorithm: Algorithm,
    /// Cap on candidate words enumerated per word.
    pub candidate_cap: usize,
    /// Modification-rate budget; None runs unlimited.
    pub max_mr: Option<f64>,
    pub seed: u64,
    /// Characters that end a sentence (textbugger only).
    pub sentence_terminals: Vec<char>,
}

impl Default for AttackConfig {
    fn default() -> AttackConfig {
        AttackConfig {
            algorithm: Algorithm::Pwws,
            candidate_cap: 40,
            max_mr: None,
            seed: 0,
            sentence_terminals: SENTENCE_TERMINALS.to_vec(),
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if self.candidate_cap == 0 {
            return Err(Error::invalid("candidate_cap must be at least 1"));
        }
        if let Some(mr) = self.max_mr {
            if !(mr > 0.0 && mr <= 1.0) {
                return Err(Error::invalid(format!("max_mr must lie in (0,1], got {mr}")));
            }
        }
        Ok(())
    }
}

/// Result of one attack session.
///
/// `intermediates` holds the text after every committed substitution, in
/// order; when the attack succeeds the last entry equals `final_text`.
/// `skipped` marks texts the classifier already got wrong, which never
/// enter success-rate denominators. `queries` counts texts sent to the
/// classifier during this session, the initial correctness probe included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub original: LabeledText,
    pub final_text: String,
    pub success: bool,
    pub skipped: bool,
    pub intermediates: Vec<String>,
    pub modification_rate: f64,
    pub queries: u64,
}

/// Candidate substitutions for one word: each replaces exactly one
/// character with one of its graph neighbors. Enumeration order is
/// position ascending, then neighbor similarity descending (the graph's
/// adjacency order), truncated at `cap`. The original word never appears.
pub fn candidate_words(word: &str, graph: &AdvGraph, cap: usize) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    let mut out = Vec::new();
    for pos in 0..chars.len() {
        for (nbr, _sim) in graph.neighbors_or_empty(chars[pos]) {
            debug_assert_ne!(nbr, chars[pos], "graph must not contain self-loops");
            let mut cand = String::with_capacity(word.len());
            cand.extend(&chars[..pos]);
            cand.push(nbr);
            cand.extend(&chars[pos + 1..]);
            out.push(cand);
            if out.len() == cap {
                return out;
            }
        }
    }
    out
}

pub fn attack_pwws(
    x: &LabeledText,
    f: &dyn Classifier,
    graph: &AdvGraph,
    seg: &Segmenter,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    engines::run_one(x, f, graph, seg, cfg, Algorithm::Pwws, cfg.seed)
}

pub fn attack_textbugger(
    x: &LabeledText,
    f: &dyn Classifier,
    graph: &AdvGraph,
    seg: &Segmenter,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    engines::run_one(x, f, graph, seg, cfg, Algorithm::Textbugger, cfg.seed)
}

pub fn attack_random(
    x: &LabeledText,
    f: &dyn Classifier,
    graph: &AdvGraph,
    seg: &Segmenter,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    engines::run_one(x, f, graph, seg, cfg, Algorithm::Random, cfg.seed)
}

/// One attack session with `cfg.algorithm` and `cfg.seed` as-is.
pub fn attack_once(
    x: &LabeledText,
    f: &dyn Classifier,
    graph: &AdvGraph,
    seg: &Segmenter,
    cfg: &AttackConfig,
) -> Result<AttackOutcome> {
    engines::run_one(x, f, graph, seg, cfg, cfg.algorithm, cfg.seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Session seed for the `index`-th text of a batch run. Mixing the index
/// through splitmix64 keeps per-text streams decorrelated even for
/// adjacent indices and a fixed base seed.
pub fn session_seed(base: u64, index: usize) -> u64 {
    base ^ splitmix64(index as u64)
}

/// Attack every text, in input order, with per-text seeds derived from
/// `cfg.seed`. Results do not depend on `jobs`; parallel sessions only
/// interleave their classifier calls.
pub fn run_attacks(
    texts: &[LabeledText],
    f: &dyn Classifier,
    graph: &AdvGraph,
    seg: &Segmenter,
    cfg: &AttackConfig,
    jobs: usize,
) -> Result<Vec<AttackOutcome>> {
    cfg.validate()?;
    if jobs == 0 {
        return Err(Error::invalid("jobs must be at least 1"));
    }
    let one = |(i, x): (usize, &LabeledText)| {
        engines::run_one(x, f, graph, seg, cfg, cfg.algorithm, session_seed(cfg.seed, i))
    };
    if jobs == 1 {
        return texts.iter().enumerate().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::internal(format!("thread pool: {e}")))?;
    pool.install(|| {
        use rayon::prelude::*;
        texts.par_iter().enumerate().map(one).collect()
    })
}

/// One outcome per line, JSON. The format round-trips through
/// [`load_traces`] exactly.
pub fn write_traces(path: &Path, outcomes: &[AttackOutcome]) -> Result<()> {
    let mut out = Vec::new();
    for o in outcomes {
        serde_json::to_writer(&mut out, o).map_err(|e| Error::internal(format!("encode trace: {e}")))?;
        out.push(b'\n');
    }
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn load_traces(path: &Path) -> Result<Vec<AttackOutcome>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (lno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let o: AttackOutcome = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, lno + 1, format!("bad trace record: {e}")))?;
        out.push(o);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chargraph::build_graph;
    use crate::chargraph::test_support::rec;

    fn small_graph() -> AdvGraph {
        // 博/菠 share a reading; 微/薇 share one; 微/徽 near-identical codes
        let records = vec![
            rec('博', &["bo"], &[1, 2, 2, 1, 1, 2]),
            rec('菠', &["bo"], &[1, 2, 2, 3, 5, 4]),
            rec('微', &["wei"], &[3, 3, 2, 2, 5, 2, 1]),
            rec('薇', &["wei"], &[1, 2, 2, 3, 3, 2, 2, 5, 2, 1]),
            rec('徽', &["hui"], &[3, 3, 2, 2, 5, 2, 1, 1]),
        ];
        build_graph(&records, 0.5, usize::MAX).unwrap()
    }

    #[test]
    fn candidates_enumerate_position_then_similarity() {
        let g = small_graph();
        let cands = candidate_words("微博", &g, 40);
        // position 0 first (neighbors of 微), then position 1 (neighbors of 博)
        assert!(cands.len() >= 2);
        assert!(cands.iter().position(|c| c.ends_with('博')).unwrap()
            < cands.iter().position(|c| c.starts_with('微')).unwrap());
        for c in &cands {
            assert_ne!(c, "微博");
            assert_eq!(c.chars().count(), 2);
        }
    }

    #[test]
    fn candidate_cap_truncates() {
        let g = small_graph();
        let all = candidate_words("微博", &g, 40);
        let capped = candidate_words("微博", &g, 1);
        assert_eq!(capped.len(), 1);
        assert_eq!(capped[0], all[0]);
    }

    #[test]
    fn oov_word_has_no_candidates() {
        let g = small_graph();
        assert!(candidate_words("abc", &g, 40).is_empty());
    }

    #[test]
    fn trace_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let outcomes = vec![AttackOutcome {
            original: LabeledText::new("微博真不错", 1),
            final_text: "薇博真不错".into(),
            success: true,
            skipped: false,
            intermediates: vec!["薇博真不错".into()],
            modification_rate: 0.2,
            queries: 7,
        }];
        write_traces(&path, &outcomes).unwrap();
        assert_eq!(load_traces(&path).unwrap(), outcomes);
    }

    #[test]
    fn session_seeds_differ_across_indices() {
        let a = session_seed(42, 0);
        let b = session_seed(42, 1);
        assert_ne!(a, b);
        assert_eq!(a, session_seed(42, 0));
    }
}
