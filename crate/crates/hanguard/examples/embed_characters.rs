//! Learn node embeddings over the substitution graph with biased random
//! walks + skip-gram, then show nearest neighbors in embedding space.
//! Characters that share many confusable neighbors end up close together
//! even when they are not directly connected.
//!
//!     cargo run --example embed_characters

use std::path::Path;

use hanguard::chargraph;
use hanguard::embedding::{self, cosine, WalkConfig};
use hanguard::Result;

fn main() -> Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let records = chargraph::load_character_table(root.join("data/chars.tsv"))?;
    let graph = chargraph::build_graph(&records, 0.5, usize::MAX)?;

    let cfg = WalkConfig { walks_per_node: 8, walk_length: 20, epochs: 3, seed: 42, ..WalkConfig::default() };
    let walks = embedding::generate_walks(&graph, &cfg)?;
    println!("generated {} walks", walks.len());

    let table = embedding::train_embeddings(&walks, &cfg, 32)?;
    println!("trained {} vectors of dim {}", table.len(), table.dim());

    for probe in ['博', '明', '发'] {
        let anchor = match table.get(probe) {
            Some(v) => v,
            None => continue,
        };
        let mut scored: Vec<(char, f64)> = table
            .chars()
            .filter(|&c| c != probe)
            .map(|c| (c, cosine(anchor, table.lookup(c))))
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        let near: Vec<String> = scored.iter().take(5).map(|(c, s)| format!("{c} {s:.3}")).collect();
        println!("{probe} nearest: {}", near.join(", "));
    }

    let out = root.join("build/example_nodes.vec");
    std::fs::create_dir_all(out.parent().unwrap()).ok();
    table.save(&out)?;
    println!("saved to {}", out.display());
    Ok(())
}
