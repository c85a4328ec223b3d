//! The whole pipeline in one run, scaled down: build the graph, embed its
//! nodes, train a plain baseline, harden a graph-fused model on curriculum
//! adversarial data, and attack both. The hardened model should keep its
//! benign accuracy while the attack success rate drops.
//!
//!     cargo run --release --example end_to_end

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use hanguard::attack::{self, Algorithm, AttackConfig, Segmenter};
use hanguard::augment::{self, AugmentConfig};
use hanguard::chargraph;
use hanguard::classifier::LocalClassifier;
use hanguard::dataset::{self, LabeledText};
use hanguard::embedding::{self, WalkConfig};
use hanguard::fusion::{FusionConfig, FusionModel, Mode, Vocab};
use hanguard::metrics;
use hanguard::Result;

fn train_model(
    mode: Mode,
    data: &[LabeledText],
    nodes: Option<hanguard::embedding::EmbeddingTable>,
) -> Result<LocalClassifier> {
    let cfg = FusionConfig {
        mode,
        d1: 32,
        d2: nodes.as_ref().map_or(24, |t| t.dim()),
        l: 40,
        lm_layers: 1,
        lm_heads: 4,
        t1_layers: 1,
        t2_layers: 1,
        seed: 7,
        ..FusionConfig::default()
    };
    let vocab = Vocab::from_texts(data.iter().map(|t| t.text.as_str()));
    let mut model = FusionModel::new(cfg, vocab, nodes)?;
    model.train(data, 10, 16, 0.03)?;
    Ok(LocalClassifier::new(Arc::new(model)))
}

fn main() -> Result<()> {
    let started = Instant::now();
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let train: Vec<_> = dataset::load_jsonl(root.join("data/train.jsonl"))?.into_iter().take(800).collect();
    let test = dataset::load_jsonl(root.join("data/test.jsonl"))?;
    let eval_sample = metrics::sample_eval_set(&test, 80, 5);

    let records = chargraph::load_character_table(root.join("data/chars.tsv"))?;
    let graph = chargraph::build_graph(&records, 0.5, usize::MAX)?;
    let seg = Segmenter::from_dict_file(root.join("data/words.txt"))?;
    let walk_cfg = WalkConfig { seed: 42, ..WalkConfig::default() };
    let nodes = embedding::train_embeddings(&embedding::generate_walks(&graph, &walk_cfg)?, &walk_cfg, 24)?;

    let attack_cfg = AttackConfig { algorithm: Algorithm::Textbugger, seed: 13, ..AttackConfig::default() };

    // Undefended baseline.
    let baseline = train_model(Mode::Baseline, &train, None)?;
    let base_acc = metrics::accuracy(&baseline, &eval_sample)?;
    let base_outcomes = attack::run_attacks(&eval_sample, &baseline, &graph, &seg, &attack_cfg, 1)?;
    let base_report = metrics::robustness_report(&base_outcomes, metrics::LASR_CAP)?;
    println!("baseline     acc {base_acc:.3}  uasr {:.3}  lasr {:.3}", base_report.uasr, base_report.lasr);

    // Curriculum augmentation against the model under attack.
    let aug_cfg = AugmentConfig {
        epsilon_max: 0.45,
        stop_ratio: 1.0,
        shuffle_seed: 3,
        attack: AttackConfig { seed: 29, ..attack_cfg.clone() },
    };
    let (augmented, report) = augment::augment(&train, &baseline, &graph, &seg, &aug_cfg, 1)?;
    println!(
        "augmented with {} texts from {} chains ({} sources consumed)",
        report.generated, report.n_chains, report.sources_consumed
    );

    // Hardened graph-fused model trained on the augmented set.
    let fused = train_model(Mode::FullFusion, &augmented, Some(nodes))?;
    let fused_acc = metrics::accuracy(&fused, &eval_sample)?;
    let fused_outcomes = attack::run_attacks(&eval_sample, &fused, &graph, &seg, &attack_cfg, 1)?;
    let fused_report = metrics::robustness_report(&fused_outcomes, metrics::LASR_CAP)?;
    println!("full_fusion  acc {fused_acc:.3}  uasr {:.3}  lasr {:.3}", fused_report.uasr, fused_report.lasr);

    println!(
        "\nuasr {:.3} -> {:.3}, benign accuracy {:+.3}, {:.0}s total",
        base_report.uasr,
        fused_report.uasr,
        fused_acc - base_acc,
        started.elapsed().as_secs_f64()
    );
    Ok(())
}
