//! Build the character substitution graph from the bundled table and poke
//! around in it: neighbor lists, edge-kind counts, a few similarity scores.
//!
//!     cargo run --example build_graph

use std::path::Path;

use hanguard::chargraph::{self, NeighborFilter};
use hanguard::Result;

fn main() -> Result<()> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let records = chargraph::load_character_table(root.join("data/chars.tsv"))?;
    println!("loaded {} character records", records.len());

    let graph = chargraph::build_graph(&records, 0.5, usize::MAX)?;
    let (phonetic, glyph, both) = graph.kind_counts();
    println!(
        "graph: {} nodes, {} edges ({phonetic} phonetic, {glyph} glyph, {both} both)",
        graph.nodes().count(),
        graph.edge_count()
    );

    // Homophones connect regardless of how different they look.
    for c in ['博', '是', '微'] {
        let all = graph.neighbors_or_empty(c);
        let sound_alike = graph.neighbors(c, NeighborFilter::Phonetic)?;
        println!("\n{c}: {} neighbors, {} phonetic-only", all.len(), sound_alike.len());
        for (other, score) in all.iter().take(5) {
            println!("  {c} ~ {other}  similarity {score:.3}");
        }
    }

    let out = root.join("build/example_graph.txt");
    std::fs::create_dir_all(out.parent().unwrap()).ok();
    graph.save(&out)?;
    println!("\nsaved to {}", out.display());
    Ok(())
}
