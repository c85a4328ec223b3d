//! Curriculum adversarial augmentation: attack the training set under a
//! modification-rate ceiling and collect every intermediate rewrite of each
//! successful chain, not just the final adversarial text. The chain prefix
//! carries progressively harder variants of the same sentence, which is
//! what makes retraining on it effective. Also shows the conventional
//! final-texts-only variant for comparison: it consumes every source to
//! reach a similar yield.
//!
//!     cargo run --example augment_dataset

use std::path::Path;
use std::sync::Arc;

use hanguard::attack::{Algorithm, AttackConfig, Segmenter};
use hanguard::augment::{self, AugmentConfig};
use hanguard::chargraph;
use hanguard::classifier::LocalClassifier;
use hanguard::dataset;
use hanguard::fusion::{FusionConfig, FusionModel, Mode, Vocab};
use hanguard::Result;

fn main() -> Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let sources: Vec<_> = dataset::load_jsonl(root.join("data/train.jsonl"))?.into_iter().take(400).collect();

    let records = chargraph::load_character_table(root.join("data/chars.tsv"))?;
    let graph = chargraph::build_graph(&records, 0.5, usize::MAX)?;
    let seg = Segmenter::from_dict_file(root.join("data/words.txt"))?;

    let cfg = FusionConfig { mode: Mode::Baseline, d1: 32, l: 40, lm_layers: 1, lm_heads: 4, seed: 7, ..FusionConfig::default() };
    let vocab = Vocab::from_texts(sources.iter().map(|t| t.text.as_str()));
    let mut model = FusionModel::new(cfg, vocab, None)?;
    model.train(&sources, 10, 16, 0.03)?;
    let f = LocalClassifier::new(Arc::new(model));

    let aug_cfg = AugmentConfig {
        epsilon_max: 0.45,
        stop_ratio: 0.5,
        shuffle_seed: 3,
        attack: AttackConfig { algorithm: Algorithm::Textbugger, seed: 11, ..AttackConfig::default() },
    };

    let (augmented, report) = augment::augment(&sources, &f, &graph, &seg, &aug_cfg, 1)?;
    println!("curriculum: |D| {} -> |D ∪ D_ag| {}", sources.len(), augmented.len());
    println!(
        "  {} chains from {} sources, {} texts generated, {} queries",
        report.n_chains, report.sources_consumed, report.generated, report.total_queries
    );

    // Chains sit at the tail, after the untouched original set.
    let first_new = augmented.len() - report.generated;
    println!("  first generated text: {}", augmented[first_new].text);

    let (conv, conv_report) =
        augment::conventional_adversarial_set(&sources, &f, &graph, &seg, &aug_cfg, 1)?;
    println!("\nconventional: |D ∪ D_adv| {}", conv.len());
    println!(
        "  {} finals from {} sources, {} queries",
        conv_report.generated, conv_report.sources_consumed, conv_report.total_queries
    );
    Ok(())
}
