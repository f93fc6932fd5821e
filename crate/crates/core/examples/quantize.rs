//! Residual quantization of one vector: each step picks the token nearest
//! to what the previous steps left over.

use anyhow::Result;
use dre::codebook::{Codebook, Metric};
use dre::quantizer::{commitment_loss, representation_space, residual_quantize};

fn main() -> Result<()> {
    let cb = Codebook::synthetic(256, 16, 3).with_metric(Metric::Euclidean);
    let h: Vec<f64> = (0..16).map(|i| ((i as f64) * 0.7).sin() * 0.5).collect();

    for k in 1..=4 {
        let seq = residual_quantize(&cb, &h, k)?;
        let err: f64 = seq.final_residual.iter().map(|x| x * x).sum::<f64>().sqrt();
        let tokens: Vec<&str> = seq.codes.iter().map(|&c| cb.token(c)).collect();
        let z: Vec<Vec<f64>> = seq.quantized.clone();
        let commit = commitment_loss(&seq.step_inputs(), &z, 0.25)?;
        println!("K={k}: {tokens:?} remainder norm {err:.4}, commitment {commit:.4}");
    }
    match representation_space(cb.len() as u128, 3, 3) {
        Some(n) => println!("{} tokens, 3 views of 3 codes: {n} distinct encodings", cb.len()),
        None => println!("representation space overflows u128"),
    }
    Ok(())
}
