//! Train the three classifier variants on a slice of the bundled sentiment
//! data and compare their test accuracy. The graph-aware modes consume the
//! node embedding table built from the substitution graph; run the
//! embed_characters example first or let this one build a fresh table.
//!
//!     cargo run --example train_classifier

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use hanguard::chargraph;
use hanguard::classifier::LocalClassifier;
use hanguard::dataset;
use hanguard::embedding::{self, WalkConfig};
use hanguard::fusion::{FusionConfig, FusionModel, Mode, Vocab};
use hanguard::metrics;
use hanguard::Result;

fn main() -> Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let train: Vec<_> = dataset::load_jsonl(root.join("data/train.jsonl"))?.into_iter().take(600).collect();
    let test: Vec<_> = dataset::load_jsonl(root.join("data/test.jsonl"))?.into_iter().take(200).collect();
    println!("{} train / {} test", train.len(), test.len());

    let records = chargraph::load_character_table(root.join("data/chars.tsv"))?;
    let graph = chargraph::build_graph(&records, 0.5, usize::MAX)?;
    let walk_cfg = WalkConfig { seed: 42, ..WalkConfig::default() };
    let nodes = embedding::train_embeddings(&embedding::generate_walks(&graph, &walk_cfg)?, &walk_cfg, 24)?;

    let base_cfg = FusionConfig {
        d1: 32,
        d2: nodes.dim(),
        l: 40,
        lm_layers: 1,
        lm_heads: 4,
        t1_layers: 1,
        t2_layers: 1,
        seed: 7,
        ..FusionConfig::default()
    };

    // The direct concat feeds the repeated fusion row straight into the
    // head, which multiplies its gradient by the sequence length; it only
    // tolerates a much gentler rate than the re-encoded variants.
    let schedule = [(Mode::Baseline, 0.03, 10), (Mode::GraphConcat, 0.005, 12), (Mode::FullFusion, 0.03, 25)];
    for (mode, lr, epochs) in schedule {
        let vocab = Vocab::from_texts(train.iter().map(|t| t.text.as_str()));
        let table = if mode == Mode::Baseline { None } else { Some(nodes.clone()) };
        let mut model = FusionModel::new(FusionConfig { mode, ..base_cfg.clone() }, vocab, table)?;

        let start = Instant::now();
        let report = model.train(&train, epochs, 16, lr)?;
        let last = report.epochs.last().unwrap();
        let f = LocalClassifier::new(Arc::new(model));
        let acc = metrics::accuracy(&f, &test)?;
        println!(
            "{:<13} train acc {:.3}, test acc {acc:.3}  ({:.1}s)",
            mode.as_str(),
            last.accuracy,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
