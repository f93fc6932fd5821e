//! A frozen token codebook: refinement, exact nearest-token search, code
//! usage perplexity and the on-disk format.

use anyhow::Result;
use dre::codebook::{load_codebook, save_codebook, CodeUsage, Codebook, Metric, RefineRules};

fn main() -> Result<()> {
    let cb = Codebook::synthetic_mixed(512, 32, 1);
    let refined = cb.refine(&RefineRules::default())?;
    println!("{} tokens, {} kept after refinement", cb.len(), refined.active_len());
    let dropped: Vec<&str> = (0..cb.len()).filter(|&c| !refined.is_active(c)).take(5).map(|c| cb.token(c)).collect();
    println!("dropped, e.g.: {dropped:?}");

    let target = refined.active_codes().nth(5).expect("refined codebook is not empty");
    let query: Vec<f64> = cb.embedding(target).iter().map(|x| x * 3.0 + 0.01).collect();
    println!("query: 3 x {:?} + 0.01", cb.token(target));
    for metric in [Metric::Cosine, Metric::Euclidean] {
        let c = refined.clone().with_metric(metric).nearest_index(&query)?;
        println!("{metric:?}: nearest token {:?}", cb.token(c));
    }

    let mut usage = CodeUsage::new(1, cb.len());
    for c in [3, 3, 3, 9] {
        usage.record(0, c);
    }
    println!("perplexity of {:?} usage: {:.4}", [3, 3, 3, 9], usage.perplexity(0)?);

    let dir = tempfile_dir()?;
    save_codebook(&cb, dir.join("vocab.tsv"), dir.join("embeddings.bin"))?;
    let back = load_codebook(dir.join("vocab.tsv"), dir.join("embeddings.bin"))?;
    println!("round trip identical: {}", back.embeddings() == cb.embeddings() && back.tokens() == cb.tokens());
    Ok(())
}

fn tempfile_dir() -> Result<std::path::PathBuf> {
    let d = std::env::temp_dir().join("dre-codebook-example");
    std::fs::create_dir_all(&d)?;
    Ok(d)
}
