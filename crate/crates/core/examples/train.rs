//! Train on the small synthetic graph, evaluate, save a checkpoint and
//! print the metrics as CSV.
//!
//!     RUST_LOG=info cargo run --release --example train

use anyhow::Result;
use dre::codebook::Codebook;
use dre::encoder::ModelParams;
use dre::synthetic::{generate, SyntheticConfig};
use dre::trainer::{evaluate, train, TrainConfig};

fn main() -> Result<()> {
    env_logger::init();
    let g = generate(&SyntheticConfig::small(0))?;
    let cb = Codebook::synthetic_mixed(256, 16, 0);
    let cfg = TrainConfig {
        epochs: 30,
        dim: 16,
        fanouts: vec![5, 5, 5],
        dropout: 0.0,
        lr_decoder: 1e-3,
        beta: 0.1,
        edge_batch: 8,
        ..TrainConfig::default()
    };
    let out = train(&g, &cfg, &cb)?;
    let test = evaluate(&out.params, &g, "test", &cfg, &out.codebook)?;
    println!("test accuracy {test:.4}");
    if let Some(usage) = &out.usage {
        for t in 0..usage.layers() {
            println!("layer {} perplexity {:.2}", t + 1, usage.perplexity(t)?);
        }
    }

    let path = std::env::temp_dir().join("dre-example.ckpt");
    out.params.save(&path)?;
    let reloaded = ModelParams::load(&path)?;
    println!("checkpoint reload accuracy {:.4}", evaluate(&reloaded, &g, "test", &cfg, &out.codebook)?);

    print!("{}", out.log.plot_csv());
    Ok(())
}
