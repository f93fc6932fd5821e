//! Generate a synthetic citation-style graph, write it as a dataset
//! directory, load it back and print its statistics.
//!
//!     cargo run --release --example dataset -- [out_dir]

use anyhow::Result;
use dre::graph::{load_dataset, write_dataset};
use dre::synthetic::{generate, SyntheticConfig};

fn main() -> Result<()> {
    let out = std::env::args().nth(1).map(std::path::PathBuf::from);
    let g = generate(&SyntheticConfig::cora_like(0))?;
    let dir = match out {
        Some(d) => d,
        None => std::env::temp_dir().join("dre-cora-like"),
    };
    std::fs::create_dir_all(&dir)?;
    write_dataset(&g, &dir)?;

    let back = load_dataset(&dir)?;
    let s = back.stats();
    println!("wrote {}", dir.display());
    println!("{} nodes, {} edges, {} features, {} classes", s.nodes, s.edges, s.features, s.classes);
    println!("edge density {:.4} permyriad", s.sparsity_permyriad);
    println!("splits: {} train / {} val / {} test", s.train, s.val, s.test);
    println!("labels: {}", back.label_names().join(", "));
    Ok(())
}
