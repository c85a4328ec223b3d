//! Robustness metrics over a batch of attacks: unlimited attack success
//! rate, the limited variant that only counts wins under a
//! modification-rate cap, and the mean rate over successes. Texts the
//! model already misclassifies are skipped and excluded from every
//! denominator.
//!
//!     cargo run --example evaluate_robustness

use std::path::Path;
use std::sync::Arc;

use hanguard::attack::{self, Algorithm, AttackConfig, Segmenter};
use hanguard::chargraph;
use hanguard::classifier::LocalClassifier;
use hanguard::dataset;
use hanguard::fusion::{FusionConfig, FusionModel, Mode, Vocab};
use hanguard::metrics;
use hanguard::Result;

fn main() -> Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let train: Vec<_> = dataset::load_jsonl(root.join("data/train.jsonl"))?.into_iter().take(600).collect();
    let test = dataset::load_jsonl(root.join("data/test.jsonl"))?;
    let sample = metrics::sample_eval_set(&test, 60, 5);

    let records = chargraph::load_character_table(root.join("data/chars.tsv"))?;
    let graph = chargraph::build_graph(&records, 0.5, usize::MAX)?;
    let seg = Segmenter::from_dict_file(root.join("data/words.txt"))?;

    let cfg = FusionConfig { mode: Mode::Baseline, d1: 32, l: 40, lm_layers: 1, lm_heads: 4, seed: 7, ..FusionConfig::default() };
    let vocab = Vocab::from_texts(train.iter().map(|t| t.text.as_str()));
    let mut model = FusionModel::new(cfg, vocab, None)?;
    model.train(&train, 10, 16, 0.03)?;
    let f = LocalClassifier::new(Arc::new(model));

    let acc = metrics::accuracy(&f, &sample)?;
    println!("benign accuracy on {} texts: {acc:.3}", sample.len());

    let attack_cfg = AttackConfig { algorithm: Algorithm::Pwws, seed: 17, ..AttackConfig::default() };
    let outcomes = attack::run_attacks(&sample, &f, &graph, &seg, &attack_cfg, 1)?;
    let report = metrics::robustness_report(&outcomes, metrics::LASR_CAP)?;
    println!(
        "uasr {:.3}, lasr {:.3} (cap {}), {} eligible / {} successful",
        report.uasr,
        report.lasr,
        metrics::LASR_CAP,
        report.n_eligible,
        report.n_success
    );
    if let Some(mr) = report.mean_mr {
        println!("mean modification rate over successes: {mr:.3}");
    }

    let summary = metrics::EvalSummary::new(Some(acc), Some(&report));
    println!("{}", serde_json::to_string_pretty(&summary).unwrap());
    Ok(())
}
