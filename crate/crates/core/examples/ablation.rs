//! Switch the structural additions on one at a time and score each step.
//! Pass `--full` for all 32 combinations.

use anyhow::Result;
use dre::codebook::Codebook;
use dre::synthetic::{generate, SyntheticConfig};
use dre::trainer::{ablate, ablation_ladder, full_toggle_matrix, TrainConfig};

fn main() -> Result<()> {
    let full = std::env::args().any(|a| a == "--full");
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
    let configs = if full { full_toggle_matrix() } else { ablation_ladder() };
    for row in ablate(&g, &cfg, &cb, &configs, &[0, 1, 2])? {
        println!("{:<28} {:.3} ± {:.3}", row.label, row.test_mean, row.test_std);
    }
    Ok(())
}
