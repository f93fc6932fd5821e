//! Encode nodes with a freshly initialized encoder and read off their
//! per-view tokens and class probabilities.

use anyhow::Result;
use dre::codebook::{Codebook, RefineRules};
use dre::encoder::{Encoder, EncoderConfig, ModelParams};
use dre::heads::classify;
use dre::synthetic::{generate, SyntheticConfig};

fn main() -> Result<()> {
    let g = generate(&SyntheticConfig::small(0))?;
    let cb = Codebook::synthetic_mixed(256, 16, 0).refine(&RefineRules::default())?;
    let cfg = EncoderConfig {
        dim: 16,
        fanouts: vec![5, 5, 5],
        ..EncoderConfig::default()
    };
    let params = ModelParams::init(cfg.model_shape(g.num_features(), g.num_classes()), 0);
    let encoder = Encoder::new(&g, &cb, &cfg)?;
    for enc in encoder.encode_nodes(&params, &[0, 1, 2], 9)? {
        println!("node {}", enc.center);
        for (t, tokens) in enc.tokens(&cb).iter().enumerate() {
            println!("  {}-hop: {tokens:?}", t + 1);
        }
        let p = classify(&enc, &params)?;
        println!("  p(class) = {:?}", p.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>());
    }
    Ok(())
}
