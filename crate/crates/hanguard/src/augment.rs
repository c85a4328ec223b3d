//! Curriculum adversarial augmentation.
//!
//! For each source text the model still classifies correctly, run an attack
//! capped online at `epsilon_max`; when it flips the label and the final
//! modification rate stays strictly below the cap, the whole chain of
//! committed texts (the final adversarial one included) joins the augmented
//! set under the source's ground-truth label. Collection stops early once
//! the generated set outgrows `stop_ratio` times the source set, which is
//! why far fewer than |D| sources are usually touched. The source set
//! itself is appended at the end, so the output trains a model directly.
//!
//! A conventional baseline is also provided: attack every source, keep only
//! final adversarial texts, never stop early. It exists for cost
//! comparisons, not because you should use it.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{self, AttackConfig, AttackOutcome, Segmenter};
use crate::chargraph::AdvGraph;
use crate::classifier::Classifier;
use crate::dataset::LabeledText;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct AugmentConfig {
    /// A chain is accepted only if its final modification rate is strictly
    /// below this; the attack itself already refuses to step past it.
    pub epsilon_max: f64,
    pub attack: AttackConfig,
    /// Early stop once generated > stop_ratio * |D|.
    pub stop_ratio: f64,
    /// Sources are visited in seeded-shuffle order; with early stopping the
    /// order decides which sources get consumed at all.
    pub shuffle_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> AugmentConfig {
        AugmentConfig {
            epsilon_max: 0.45,
            attack: AttackConfig::default(),
            stop_ratio: 1.0,
            shuffle_seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon_max > 0.0 && self.epsilon_max <= 1.0) {
            return Err(Error::invalid(format!("epsilon_max must lie in (0,1], got {}", self.epsilon_max)));
        }
        if !(self.stop_ratio > 0.0) {
            return Err(Error::invalid(format!("stop_ratio must be positive, got {}", self.stop_ratio)));
        }
        self.attack.validate()
    }
}

/// What an augmentation run did. `generated` counts texts added before the
/// source set is re-appended; `sources_consumed` counts sources actually
/// processed before the early stop (attempted, not just accepted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub n_chains: usize,
    pub generated: usize,
    pub skipped_misclassified: usize,
    pub total_queries: u64,
    /// Mean char length of accepted chains' sources; 0 when none accepted.
    pub avg_source_length: f64,
    pub sources_consumed: usize,
    /// Set when a classifier fault cut the run short; the data and counts
    /// up to that point are still valid.
    pub aborted: Option<String>,
}

/// How many accepted chains a target size needs at best: each chain over a
/// source of length l_avg contributes fewer than l_avg * epsilon_max texts,
/// so n >= target / (l_avg * epsilon_max).
pub fn required_chains_lower_bound(target_size: usize, l_avg: f64, epsilon_max: f64) -> Result<f64> {
    if target_size == 0 || !(l_avg > 0.0) || !(epsilon_max > 0.0) {
        return Err(Error::invalid("required_chains_lower_bound needs positive arguments"));
    }
    Ok(target_size as f64 / (l_avg * epsilon_max))
}

struct Collector {
    out: Vec<LabeledText>,
    report: AugmentReport,
    sum_source_len: usize,
    stop_at: usize,
}

impl Collector {
    fn new() -> Collector {
        Collector {
            out: Vec::new(),
            report: AugmentReport {
                n_chains: 0,
                generated: 0,
                skipped_misclassified: 0,
                total_queries: 0,
                avg_source_length: 0.0,
                sources_consumed: 0,
                aborted: None,
            },
            sum_source_len: 0,
            stop_at: usize::MAX,
        }
    }

    /// Returns true when the early-stop threshold has been crossed.
    fn commit(&mut self, outcome: &AttackOutcome, epsilon_max: f64, finals_only: bool) -> bool {
        self.report.sources_consumed += 1;
        self.report.total_queries += outcome.queries;
        if outcome.skipped {
            self.report.skipped_misclassified += 1;
            return false;
        }
        if !(outcome.success && outcome.modification_rate < epsilon_max) {
            return false;
        }
        let label = outcome.original.label;
        if finals_only {
            self.out.push(LabeledText::new(outcome.final_text.clone(), label));
            self.report.generated += 1;
        } else {
            for t in &outcome.intermediates {
                self.out.push(LabeledText::new(t.clone(), label));
            }
            self.report.generated += outcome.intermediates.len();
        }
        self.report.n_chains += 1;
        self.sum_source_len += outcome.original.text.chars().count();
        self.report.generated > self.stop_at
    }

    fn finish(mut self, data: &[LabeledText]) -> (Vec<LabeledText>, AugmentReport) {
        if self.report.n_chains > 0 {
            self.report.avg_source_length = self.sum_source_len as f64 / self.report.n_chains as f64;
        }
        self.out.extend_from_slice(data);
        (self.out, self.report)
    }
}

fn run(
    data: &[LabeledText],
    f: &dyn Classifier,
    graph: &AdvGraph,
    seg: &Segmenter,
    cfg: &AugmentConfig,
    jobs: usize,
    curriculum: bool,
) -> Result<(Vec<LabeledText>, AugmentReport)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("cannot augment an empty dataset"));
    }
    if jobs == 0 {
        return Err(Error::invalid("jobs must be at least 1"));
    }

    let mut order: Vec<usize> = (0..data.len()).collect();
    if curriculum {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.shuffle_seed);
        order.shuffle(&mut rng);
    }

    // Attacks run capped at epsilon_max regardless of what the caller's
    // attack config said; the acceptance check below is the strict < one.
    let mut attack_cfg = cfg.attack.clone();
    attack_cfg.max_mr = Some(cfg.epsilon_max);

    let mut collector = Collector::new();
    if curriculum {
        collector.stop_at = (cfg.stop_ratio * data.len() as f64).floor() as usize;
    }

    let attack_one =
        |i: usize| -> Result<AttackOutcome> { attack::attack_once(&data[i], f, graph, seg, &seeded(&attack_cfg, i)) };

    // Windows of `jobs` sources attack in parallel; commits stay in visit
    // order, so the output is identical for every jobs value and the early
    // stop lands on the same source. Window results past the stop point are
    // discarded (their classifier queries were speculative).
    let pool = if jobs > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| Error::internal(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };

    'windows: for window in order.chunks(jobs.max(1)) {
        let results: Vec<Result<AttackOutcome>> = match &pool {
            Some(pool) => pool.install(|| {
                use rayon::prelude::*;
                window.par_iter().map(|&i| attack_one(i)).collect()
            }),
            None => window.iter().map(|&i| attack_one(i)).collect(),
        };
        for res in results {
            let outcome = match res {
                Ok(o) => o,
                Err(e @ (Error::Transport(_) | Error::Protocol(_))) => {
                    log::error!("augmentation aborted: {e}");
                    collector.report.aborted = Some(e.to_string());
                    break 'windows;
                }
                Err(e) => return Err(e),
            };
            if collector.commit(&outcome, cfg.epsilon_max, !curriculum) && curriculum {
                break 'windows;
            }
        }
    }

    Ok(collector.finish(data))
}

fn seeded(cfg: &AttackConfig, source_index: usize) -> AttackConfig {
    let mut c = cfg.clone();
    c.seed = attack::session_seed(cfg.seed, source_index);
    c
}

/// Curriculum augmentation over `data`. Returns the augmented dataset
/// (accepted chains first, then all of `data`) and the run report.
pub fn augment(
    data: &[LabeledText],
    f: &dyn Classifier,
    graph: &AdvGraph,
    seg: &Segmenter,
    cfg: &AugmentConfig,
    jobs: usize,
) -> Result<(Vec<LabeledText>, AugmentReport)> {
    run(data, f, graph, seg, cfg, jobs, true)
}

/// Conventional adversarial-training baseline: every source is attacked (in
/// dataset order, no early stop) and only final adversarial texts are kept.
pub fn conventional_adversarial_set(
    data: &[LabeledText],
    f: &dyn Classifier,
    graph: &AdvGraph,
    seg: &Segmenter,
    cfg: &AugmentConfig,
    jobs: usize,
) -> Result<(Vec<LabeledText>, AugmentReport)> {
    run(data, f, graph, seg, cfg, jobs, false)
}

pub fn write_report(path: &std::path::Path, report: &AugmentReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| Error::internal(format!("encode report: {e}")))?;
    std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_matches_hand_values() {
        assert_eq!(required_chains_lower_bound(1000, 50.0, 0.4).unwrap(), 50.0);
        assert_eq!(required_chains_lower_bound(1000, 50.0, 0.2).unwrap(), 100.0);
        assert!(required_chains_lower_bound(0, 50.0, 0.2).is_err());
        assert!(required_chains_lower_bound(10, 0.0, 0.2).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = AugmentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.epsilon_max = 0.0;
        assert!(cfg.validate().is_err());
        cfg.epsilon_max = 1.5;
        assert!(cfg.validate().is_err());
        cfg.epsilon_max = 0.3;
        cfg.stop_ratio = 0.0;
        assert!(cfg.validate().is_err());
    }
}
