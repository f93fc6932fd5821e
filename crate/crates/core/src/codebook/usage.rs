use super::CodebookError;

/// Per-layer histogram of selected codes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeUsage {
    counts: Vec<Vec<u64>>,
}

impl CodeUsage {
    pub fn new(layers: usize, codebook_len: usize) -> Self {
        Self {
            counts: vec![vec![0; codebook_len]; layers],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        Self { counts }
    }

    pub fn layers(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, layer: usize, code: usize) {
        self.counts[layer][code] += 1;
    }

    pub fn counts(&self, layer: usize) -> &[u64] {
        &self.counts[layer]
    }

    pub fn total(&self, layer: usize) -> u64 {
        self.counts[layer].iter().sum()
    }

    pub fn clear(&mut self) {
        for c in &mut self.counts {
            c.fill(0);
        }
    }

    /// `exp(−Σ p_i ln p_i)` over the empirical distribution of layer
    /// `layer`; ranges from 1 (one code) to the number of codes used.
    pub fn perplexity(&self, layer: usize) -> Result<f64, CodebookError> {
        let counts = self.counts.get(layer).ok_or(CodebookError::NoUsage(layer))?;
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(CodebookError::NoUsage(layer));
        }
        let t = total as f64;
        let entropy: f64 = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / t;
                -p * p.ln()
            })
            .sum();
        Ok(entropy.exp())
    }
}
