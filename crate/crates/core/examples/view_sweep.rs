//! Accuracy against the number of views, one model per (views, seed).

use anyhow::Result;
use dre::codebook::Codebook;
use dre::synthetic::{generate, SyntheticConfig};
use dre::trainer::{sweep_views, TrainConfig};

fn main() -> Result<()> {
    let g = generate(&SyntheticConfig::small(0))?;
    let cb = Codebook::synthetic_mixed(256, 16, 0);
    let cfg = TrainConfig {
        epochs: 20,
        dim: 16,
        fanouts: vec![5, 5, 5],
        dropout: 0.0,
        lr_decoder: 1e-3,
        beta: 0.1,
        edge_batch: 8,
        ..TrainConfig::default()
    };
    let report = sweep_views(&g, &cfg, &cb, &[1, 2, 3, 4], &[0, 1, 2])?;
    println!("views  val          test         relative to {} views", report.reference_views);
    for r in &report.rows {
        println!("{:>5}  {:.3} ± {:.3}  {:.3} ± {:.3}  {:.3}", r.views, r.val_mean, r.val_std, r.test_mean, r.test_std, r.normalized);
    }
    Ok(())
}
