//! Serve a model over HTTP and attack it through the wire. Probabilities
//! are serialized with shortest-roundtrip formatting, so the remote
//! session sees bit-identical floats and replays the exact same attack
//! the in-process classifier produces, query for query.
//!
//!     cargo run --example remote_roundtrip

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use hanguard::attack::{self, Algorithm, AttackConfig, Segmenter};
use hanguard::chargraph;
use hanguard::classifier::{Classifier, LocalClassifier, RemoteClassifier, ToyServer};
use hanguard::dataset;
use hanguard::fusion::{FusionConfig, FusionModel, Mode, Vocab};
use hanguard::Result;

fn main() -> Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let train: Vec<_> = dataset::load_jsonl(root.join("data/train.jsonl"))?.into_iter().take(400).collect();
    let victims: Vec<_> = dataset::load_jsonl(root.join("data/test.jsonl"))?.into_iter().take(10).collect();

    let records = chargraph::load_character_table(root.join("data/chars.tsv"))?;
    let graph = chargraph::build_graph(&records, 0.5, usize::MAX)?;
    let seg = Segmenter::from_dict_file(root.join("data/words.txt"))?;

    let cfg = FusionConfig { mode: Mode::Baseline, d1: 32, l: 40, lm_layers: 1, lm_heads: 4, seed: 7, ..FusionConfig::default() };
    let vocab = Vocab::from_texts(train.iter().map(|t| t.text.as_str()));
    let mut model = FusionModel::new(cfg, vocab, None)?;
    model.train(&train, 8, 16, 0.03)?;
    let model = Arc::new(model);

    let server = ToyServer::spawn(Arc::clone(&model), "127.0.0.1:0")?;
    println!("server at {}", server.base_url());

    let attack_cfg = AttackConfig { algorithm: Algorithm::Pwws, seed: 41, ..AttackConfig::default() };

    let local = LocalClassifier::new(Arc::clone(&model));
    let local_outcomes = attack::run_attacks(&victims, &local, &graph, &seg, &attack_cfg, 1)?;

    let remote = RemoteClassifier::new(&server.base_url(), Duration::from_secs(10), 64)?;
    let remote_outcomes = attack::run_attacks(&victims, &remote, &graph, &seg, &attack_cfg, 1)?;
    println!("remote answered {} classifier queries", remote.query_count());

    let mut identical = 0;
    for (a, b) in local_outcomes.iter().zip(&remote_outcomes) {
        if a == b {
            identical += 1;
        } else {
            println!("DIVERGED on: {}", a.original.text);
        }
    }
    println!("{identical}/{} attack outcomes identical across the wire", victims.len());

    server.stop();
    Ok(())
}
