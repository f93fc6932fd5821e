//! Hop-bounded views, fanout-sampled computation blocks and an edge batch
//! for adjacency reconstruction.

use anyhow::Result;
use dre::graph::{extract_views, sample_blocks, sample_edges};
use dre::synthetic::{generate, SyntheticConfig};

fn main() -> Result<()> {
    let g = generate(&SyntheticConfig::small(0))?;
    let v = 0;

    let views = extract_views(&g, v, 3)?;
    for view in &views.views {
        println!("{}-hop view of node {v}: {} nodes, {} edges", view.hops, view.nodes.len(), view.edges.len());
    }

    let targets = [0, 1, 2, 3];
    let blocks = sample_blocks(&g, &targets, &[5, 5, 5], 42)?;
    println!("blocks for {targets:?}: {} input nodes", blocks.inputs.len());
    for (t, b) in blocks.layers.iter().enumerate() {
        let sampled: usize = b.neigh_pos.iter().map(Vec::len).sum();
        println!("  layer {}: {} nodes, {} sampled neighbors", t + 1, b.nodes.len(), sampled);
    }

    let batch = sample_edges(&g, 4, 12, 7)?;
    for ((pair, y), w) in batch.pairs.iter().zip(&batch.labels).zip(&batch.weights) {
        println!("  pair {pair:?} edge={y} weight={w:.3}");
    }
    Ok(())
}
