//! The loss terms and how they combine.

use anyhow::Result;
use dre::graph::EdgeBatch;
use dre::heads::{adjacency_loss, adjacency_loss_with, total_loss, LossParts, LossWeights};

fn main() -> Result<()> {
    // One edge against three non-edges: the edge is up-weighted to N / (2 N_pos) = 2.
    let batch = EdgeBatch::new(vec![(0, 1), (0, 2), (0, 3), (1, 3)], vec![true, false, false, false]);
    let p = [0.8, 0.3, 0.3, 0.3];
    println!("weights {:?}", batch.weights);
    println!("weighted BCE {:.4}", adjacency_loss(&p, &batch)?);
    println!("with both terms weighted {:.4}", adjacency_loss_with(&p, &batch, true)?);

    let parts = LossParts {
        label_ce: 1.0,
        feature_mse: 2.0,
        adjacency_wbce: 3.0,
        commitment: 0.5,
    };
    let b = total_loss(parts, LossWeights { lambda_feat: 0.1, lambda_adj: 0.1, beta: 0.25 })?;
    println!("total {:.2} = {:.2} + 0.1·{:.2} + 0.1·{:.2} + {:.2}", b.total, b.label_ce, b.feature_mse, b.adjacency_wbce, b.commitment);
    Ok(())
}
