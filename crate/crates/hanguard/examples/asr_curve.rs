//! Success-vs-budget curve. One unlimited attack per text is enough to
//! evaluate every modification-rate cap: each substitution costs exactly
//! one character, so a capped attack is the unlimited one replayed until
//! the budget denies a commit. The curve therefore comes from prefix
//! evaluation of stored chains, not from re-attacking per cap.
//!
//!     cargo run --example asr_curve

use std::path::Path;
use std::sync::Arc;

use hanguard::attack::{Algorithm, AttackConfig, Segmenter};
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
    let sample = metrics::sample_eval_set(&test, 50, 5);

    let records = chargraph::load_character_table(root.join("data/chars.tsv"))?;
    let graph = chargraph::build_graph(&records, 0.5, usize::MAX)?;
    let seg = Segmenter::from_dict_file(root.join("data/words.txt"))?;

    let cfg = FusionConfig { mode: Mode::Baseline, d1: 32, l: 40, lm_layers: 1, lm_heads: 4, seed: 7, ..FusionConfig::default() };
    let vocab = Vocab::from_texts(train.iter().map(|t| t.text.as_str()));
    let mut model = FusionModel::new(cfg, vocab, None)?;
    model.train(&train, 10, 16, 0.03)?;
    let f = LocalClassifier::new(Arc::new(model));

    let attack_cfg = AttackConfig { algorithm: Algorithm::Textbugger, seed: 23, ..AttackConfig::default() };
    let caps = [0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 1.0];
    let curve = metrics::asr_curve(&sample, &f, &graph, &seg, &attack_cfg, &caps, 1)?;

    println!("cap   asr");
    for (cap, asr) in &curve {
        let bar = "#".repeat((asr * 40.0).round() as usize);
        println!("{cap:<5} {asr:.3} {bar}");
    }

    let out = root.join("build/example_curve.csv");
    std::fs::create_dir_all(out.parent().unwrap()).ok();
    metrics::write_curve_csv(&out, &curve)?;
    println!("wrote {}", out.display());
    Ok(())
}
