//! Robustness metrics over attack traces.
//!
//! All success rates share one denominator: outcomes whose text the model
//! classified correctly before the attack (`skipped` entries are out).
//! UASR counts every successful flip, LASR only flips that stayed within a
//! modification-rate cap (0.2 by convention), and the ASR-vs-cap curve
//! generalizes LASR across caps. Because the attacks are greedy and each
//! substitution costs a fixed 1/len of modification rate, a capped attack
//! is exactly a truncated replay of the unlimited one; the curve is
//! therefore computed by prefix evaluation of stored unlimited chains
//! instead of re-attacking per cap.

use serde::{Deserialize, Serialize};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{run_attacks, AttackConfig, AttackOutcome, Segmenter};
use crate::chargraph::AdvGraph;
use crate::classifier::{label_of, Classifier};
use crate::dataset::LabeledText;
use crate::{Error, Result};

/// Modification-rate cap defining LASR.
pub const LASR_CAP: f64 = 0.2;

/// Caps for the default ASR curve.
pub const DEFAULT_CURVE_CAPS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];

const EVAL_BATCH: usize = 64;

/// Fraction of `data` the classifier labels correctly.
pub fn accuracy(f: &dyn Classifier, data: &[LabeledText]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("cannot compute accuracy of an empty dataset"));
    }
    let mut correct = 0usize;
    for chunk in data.chunks(EVAL_BATCH) {
        let texts: Vec<&str> = chunk.iter().map(|t| t.text.as_str()).collect();
        let rows = f.predict_probs(&texts)?;
        for (row, t) in rows.iter().zip(chunk) {
            if label_of(row) == t.label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub uasr: f64,
    pub lasr: f64,
    /// Mean modification rate over successful attacks; None without any.
    pub mean_mr: Option<f64>,
    pub n_eligible: usize,
    pub n_success: usize,
}

/// Did this stored chain flip the label within `cap`? Greedy attacks flip
/// only on their last committed step, so this is the capped-attack success
/// predicate evaluated for free.
pub fn success_within(outcome: &AttackOutcome, cap: f64) -> bool {
    outcome.success && outcome.modification_rate <= cap
}

pub fn robustness_report(outcomes: &[AttackOutcome], lasr_cap: f64) -> Result<RobustnessReport> {
    if !(lasr_cap > 0.0 && lasr_cap <= 1.0) {
        return Err(Error::invalid(format!("lasr_cap must lie in (0,1], got {lasr_cap}")));
    }
    let eligible: Vec<&AttackOutcome> = outcomes.iter().filter(|o| !o.skipped).collect();
    if eligible.is_empty() {
        return Err(Error::invalid("no eligible outcomes: every input was already misclassified"));
    }
    let n_eligible = eligible.len();
    let successes: Vec<&&AttackOutcome> = eligible.iter().filter(|o| o.success).collect();
    let n_success = successes.len();
    let limited = eligible.iter().filter(|o| success_within(o, lasr_cap)).count();
    let mean_mr = if n_success > 0 {
        Some(successes.iter().map(|o| o.modification_rate).sum::<f64>() / n_success as f64)
    } else {
        None
    };
    Ok(RobustnessReport {
        uasr: n_success as f64 / n_eligible as f64,
        lasr: limited as f64 / n_eligible as f64,
        mean_mr,
        n_eligible,
        n_success,
    })
}

/// Success rate at each cap, from one unlimited attack run per text.
pub fn asr_curve(
    texts: &[LabeledText],
    f: &dyn Classifier,
    graph: &AdvGraph,
    seg: &Segmenter,
    attack_cfg: &AttackConfig,
    caps: &[f64],
    jobs: usize,
) -> Result<Vec<(f64, f64)>> {
    validate_caps(caps)?;
    let mut unlimited = attack_cfg.clone();
    unlimited.max_mr = None;
    let outcomes = run_attacks(texts, f, graph, seg, &unlimited, jobs)?;
    curve_from_outcomes(&outcomes, caps)
}

/// The prefix-evaluation half of [`asr_curve`], for traces already on disk.
pub fn curve_from_outcomes(outcomes: &[AttackOutcome], caps: &[f64]) -> Result<Vec<(f64, f64)>> {
    validate_caps(caps)?;
    let n_eligible = outcomes.iter().filter(|o| !o.skipped).count();
    if n_eligible == 0 {
        return Err(Error::invalid("no eligible outcomes: every input was already misclassified"));
    }
    Ok(caps
        .iter()
        .map(|&cap| {
            let hits = outcomes.iter().filter(|o| !o.skipped && success_within(o, cap)).count();
            (cap, hits as f64 / n_eligible as f64)
        })
        .collect())
}

fn validate_caps(caps: &[f64]) -> Result<()> {
    if caps.is_empty() {
        return Err(Error::invalid("need at least one cap"));
    }
    for pair in caps.windows(2) {
        if !(pair[0] < pair[1]) {
            return Err(Error::invalid(format!("caps must be strictly ascending, got {pair:?}")));
        }
    }
    if caps.iter().any(|&c| !(c > 0.0 && c <= 1.0)) {
        return Err(Error::invalid("caps must lie in (0,1]"));
    }
    Ok(())
}

/// Seeded sample of `n` texts without replacement, in shuffle order. Asking
/// for at least the whole set returns a seeded permutation of it (with a
/// warning when strictly more was requested).
pub fn sample_eval_set(data: &[LabeledText], n: usize, seed: u64) -> Vec<LabeledText> {
    if n == 0 {
        log::warn!("sampling 0 texts from an evaluation set of {}", data.len());
        return Vec::new();
    }
    if n > data.len() {
        log::warn!("requested {n} texts but the set has only {}; using all of them", data.len());
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(n.min(data.len()));
    idx.into_iter().map(|i| data[i].clone()).collect()
}

/// `cap,asr` CSV, one row per cap.
pub fn write_curve_csv(path: &std::path::Path, curve: &[(f64, f64)]) -> Result<()> {
    let mut s = String::from("cap,asr\n");
    for (cap, asr) in curve {
        s.push_str(&format!("{cap},{asr}\n"));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// The evaluate command's JSON payload; robustness fields stay null when no
/// traces were supplied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub accuracy: Option<f64>,
    pub uasr: Option<f64>,
    pub lasr: Option<f64>,
    pub mean_mr: Option<f64>,
    pub n_eligible: Option<usize>,
    pub n_success: Option<usize>,
}

impl EvalSummary {
    pub fn new(accuracy: Option<f64>, robustness: Option<&RobustnessReport>) -> EvalSummary {
        EvalSummary {
            accuracy,
            uasr: robustness.map(|r| r.uasr),
            lasr: robustness.map(|r| r.lasr),
            mean_mr: robustness.and_then(|r| r.mean_mr),
            n_eligible: robustness.map(|r| r.n_eligible),
            n_success: robustness.map(|r| r.n_success),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(success: bool, skipped: bool, mr: f64) -> AttackOutcome {
        AttackOutcome {
            original: LabeledText::new("占位", 0),
            final_text: "占位".into(),
            success,
            skipped,
            intermediates: Vec::new(),
            modification_rate: mr,
            queries: 1,
        }
    }

    #[test]
    fn four_outcome_hand_example() {
        // 4 eligible, 2 successes at MR 0.1 and 0.3
        let outcomes = vec![
            outcome(true, false, 0.1),
            outcome(true, false, 0.3),
            outcome(false, false, 0.0),
            outcome(false, false, 0.0),
        ];
        let r = robustness_report(&outcomes, LASR_CAP).unwrap();
        assert_eq!(r.uasr, 0.5);
        assert_eq!(r.lasr, 0.25);
        assert_eq!(r.mean_mr, Some(0.2));
        assert_eq!((r.n_eligible, r.n_success), (4, 2));
    }

    #[test]
    fn no_successes_reports_null_mean() {
        let outcomes = vec![outcome(false, false, 0.0)];
        let r = robustness_report(&outcomes, LASR_CAP).unwrap();
        assert_eq!(r.uasr, 0.0);
        assert_eq!(r.lasr, 0.0);
        assert_eq!(r.mean_mr, None);
        let json = serde_json::to_string(&EvalSummary::new(None, Some(&r))).unwrap();
        assert!(json.contains("\"mean_mr\":null"));
    }

    #[test]
    fn skipped_entries_never_enter_the_denominator() {
        let outcomes = vec![outcome(true, false, 0.1), outcome(false, true, 0.0)];
        let r = robustness_report(&outcomes, LASR_CAP).unwrap();
        assert_eq!(r.n_eligible, 1);
        assert_eq!(r.uasr, 1.0);
        let all_skipped = vec![outcome(false, true, 0.0)];
        assert!(robustness_report(&all_skipped, LASR_CAP).is_err());
    }

    #[test]
    fn curve_is_monotone_and_matches_uasr_at_full_cap() {
        let outcomes = vec![
            outcome(true, false, 0.15),
            outcome(true, false, 0.4),
            outcome(false, false, 0.0),
            outcome(false, true, 0.0),
        ];
        let caps = [0.1, 0.2, 0.3, 0.4, 0.5, 1.0];
        let curve = curve_from_outcomes(&outcomes, &caps).unwrap();
        for w in curve.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
        let uasr = robustness_report(&outcomes, LASR_CAP).unwrap().uasr;
        assert_eq!(curve.last().unwrap().1, uasr);
        assert_eq!(curve[0].1, 0.0);
    }

    #[test]
    fn caps_must_ascend_within_unit_interval() {
        assert!(curve_from_outcomes(&[outcome(true, false, 0.1)], &[0.3, 0.2]).is_err());
        assert!(curve_from_outcomes(&[outcome(true, false, 0.1)], &[0.0, 0.5]).is_err());
        assert!(curve_from_outcomes(&[outcome(true, false, 0.1)], &[0.5, 1.1]).is_err());
        assert!(curve_from_outcomes(&[outcome(true, false, 0.1)], &[]).is_err());
    }

    #[test]
    fn sampling_is_seeded_and_without_replacement() {
        let data: Vec<LabeledText> =
            (0..20).map(|i| LabeledText::new(format!("文{i}"), i % 2)).collect();
        let a = sample_eval_set(&data, 10, 7);
        let b = sample_eval_set(&data, 10, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let mut texts: Vec<&str> = a.iter().map(|t| t.text.as_str()).collect();
        texts.sort_unstable();
        texts.dedup();
        assert_eq!(texts.len(), 10);

        let full = sample_eval_set(&data, 20, 7);
        let mut sorted = full.clone();
        sorted.sort_by(|x, y| x.text.cmp(&y.text));
        let mut orig = data.clone();
        orig.sort_by(|x, y| x.text.cmp(&y.text));
        assert_eq!(sorted, orig);
        assert!(sample_eval_set(&data, 0, 7).is_empty());
    }
}
