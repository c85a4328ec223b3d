//! Attack a freshly trained classifier with the three black-box strategies
//! and print each adversarial rewrite next to its source. Every substituted
//! character is a graph neighbor of the original, so the perturbations stay
//! plausible to a human reader.
//!
//!     cargo run --example attack_model

use std::path::Path;
use std::sync::Arc;

use hanguard::attack::{self, Algorithm, AttackConfig, Segmenter};
use hanguard::chargraph;
use hanguard::classifier::{Classifier, LocalClassifier};
use hanguard::dataset;
use hanguard::fusion::{FusionConfig, FusionModel, Mode, Vocab};
use hanguard::Result;

fn main() -> Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let train: Vec<_> = dataset::load_jsonl(root.join("data/train.jsonl"))?.into_iter().take(400).collect();
    let victims: Vec<_> = dataset::load_jsonl(root.join("data/test.jsonl"))?.into_iter().take(8).collect();

    let records = chargraph::load_character_table(root.join("data/chars.tsv"))?;
    let graph = chargraph::build_graph(&records, 0.5, usize::MAX)?;
    let seg = Segmenter::from_dict_file(root.join("data/words.txt"))?;

    let cfg = FusionConfig { mode: Mode::Baseline, d1: 32, l: 40, lm_layers: 1, lm_heads: 4, seed: 7, ..FusionConfig::default() };
    let vocab = Vocab::from_texts(train.iter().map(|t| t.text.as_str()));
    let mut model = FusionModel::new(cfg, vocab, None)?;
    model.train(&train, 12, 16, 0.03)?;
    let f = LocalClassifier::new(Arc::new(model));

    for algorithm in [Algorithm::Pwws, Algorithm::Textbugger, Algorithm::Random] {
        let cfg = AttackConfig { algorithm, seed: 99, ..AttackConfig::default() };
        let before = f.query_count();
        let outcomes = attack::run_attacks(&victims, &f, &graph, &seg, &cfg, 1)?;
        let flipped = outcomes.iter().filter(|o| o.success).count();
        println!(
            "\n== {} : {flipped}/{} flipped, {} classifier queries",
            algorithm.as_str(),
            outcomes.len(),
            f.query_count() - before
        );
        for o in outcomes.iter().filter(|o| o.success).take(3) {
            println!("  - {}", o.original.text);
            println!("  + {}   (mr {:.3}, {} queries)", o.final_text, o.modification_rate, o.queries);
        }
    }
    Ok(())
}
