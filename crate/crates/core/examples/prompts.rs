//! Train briefly, then export classification prompts built from each
//! node's tokens.

use anyhow::Result;
use dre::codebook::Codebook;
use dre::encoder::Encoder;
use dre::prompt::render_prompt;
use dre::synthetic::{generate, SyntheticConfig};
use dre::trainer::{train, TrainConfig};

fn main() -> Result<()> {
    let g = generate(&SyntheticConfig::small(0))?;
    let cb = Codebook::synthetic_mixed(256, 16, 0);
    let cfg = TrainConfig {
        epochs: 10,
        dim: 16,
        fanouts: vec![5, 5, 5],
        dropout: 0.0,
        lr_decoder: 1e-3,
        beta: 0.1,
        edge_batch: 8,
        ..TrainConfig::default()
    };
    let out = train(&g, &cfg, &cb)?;
    let enc_cfg = cfg.encoder_config();
    let encoder = Encoder::new(&g, &out.codebook, &enc_cfg)?;
    for enc in encoder.encode_nodes(&out.params, &g.splits().test[..3], cfg.eval_seed())? {
        println!("{}", render_prompt(&enc, &out.codebook, g.label_names())?);
        println!("  -> {}\n", g.label_names()[g.label(enc.center)]);
    }
    Ok(())
}
