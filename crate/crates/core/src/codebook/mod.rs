//! Frozen token codebook: loading, semantic refinement, exact nearest-code
//! search and code-usage perplexity.

mod io;
mod refine;
mod usage;

pub use io::{load_codebook, read_embeddings, save_codebook, write_embeddings, write_vocab, EMBEDDING_MAGIC};
pub use refine::RefineRules;
pub use usage::CodeUsage;

use std::path::PathBuf;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::dot;

#[derive(Debug, Error)]
pub enum CodebookError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error("{file}:{line}: {msg}")]
    Vocab { file: String, line: usize, msg: String },
    #[error("refinement removed every token")]
    EmptyRefinement,
    #[error("no selectable codes")]
    NoCodes,
    #[error("query has dimension {found}, codebook has {expected}")]
    Dim { expected: usize, found: usize },
    #[error("cosine nearest code is undefined for a zero vector")]
    ZeroQuery,
    #[error("no code usage recorded for layer {0}")]
    NoUsage(usize),
}

/// Similarity used to pick the nearest code.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Metric::Cosine),
            "euclidean" => Ok(Metric::Euclidean),
            other => Err(format!("unknown metric {other:?} (expected cosine or euclidean)")),
        }
    }
}

#[derive(Debug)]
struct Table {
    token_ids: Vec<u32>,
    tokens: Vec<String>,
    dim: usize,
    embeddings: Vec<f64>,
    norms: Vec<f64>,
}

/// A frozen table of token embeddings.
///
/// Rows are addressed by their position (the *code index*); each row also
/// carries the token id it had in the source vocabulary. The embedding table
/// is shared and never mutated; refinement only changes which rows are
/// selectable.
#[derive(Clone, Debug)]
pub struct Codebook {
    table: Arc<Table>,
    metric: Metric,
    active: Vec<bool>,
    active_count: usize,
}

impl Codebook {
    /// `embeddings` is row-major `tokens.len() × dim`.
    pub fn new(token_ids: Vec<u32>, tokens: Vec<String>, dim: usize, embeddings: Vec<f64>, metric: Metric) -> Result<Self, CodebookError> {
        if token_ids.len() != tokens.len() {
            return Err(CodebookError::Format(format!(
                "{} token ids for {} tokens",
                token_ids.len(),
                tokens.len()
            )));
        }
        if embeddings.len() != tokens.len() * dim {
            return Err(CodebookError::Format(format!(
                "{} embedding values for {} codes of dim {dim}",
                embeddings.len(),
                tokens.len()
            )));
        }
        let mut sorted = token_ids.clone();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(CodebookError::Format(format!("duplicate code index {}", w[0])));
        }
        let norms = embeddings.chunks(dim.max(1)).map(|r| dot(r, r).sqrt()).collect();
        let n = tokens.len();
        Ok(Self {
            table: Arc::new(Table {
                token_ids,
                tokens,
                dim,
                embeddings,
                norms,
            }),
            metric,
            active: vec![true; n],
            active_count: n,
        })
    }

    /// Seeded Gaussian embeddings with placeholder tokens `tok<i>`. Entries
    /// have variance `1 / dim`, so codes have roughly unit norm like the
    /// input embeddings of a language model. Values are `f32` so that a
    /// save/load round trip is exact.
    pub fn synthetic(count: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (dim.max(1) as f32).sqrt().recip();
        let embeddings = (0..count * dim)
            .map(|_| {
                let v: f32 = StandardNormal.sample(&mut rng);
                f64::from(v * scale)
            })
            .collect();
        let tokens = (0..count).map(|i| format!("tok{i}")).collect();
        Self::new((0..count as u32).collect(), tokens, dim, embeddings, Metric::Cosine).expect("consistent synthetic table")
    }

    /// Like [`Codebook::synthetic`] but every fourth token is a non-semantic
    /// artifact (punctuation, digits, byte tokens) so refinement has
    /// something to remove.
    pub fn synthetic_mixed(count: usize, dim: usize, seed: u64) -> Self {
        let base = Self::synthetic(count, dim, seed);
        let junk = ["##", "!!", "42", "<0x0A>", "...", "\u{1}", "  ", "1999"];
        let tokens = (0..count)
            .map(|i| {
                if i % 4 == 3 {
                    junk[(i / 4) % junk.len()].to_string()
                } else {
                    format!("tok{i}")
                }
            })
            .collect();
        let t = &base.table;
        Self::new(t.token_ids.clone(), tokens, t.dim, t.embeddings.clone(), Metric::Cosine).expect("consistent synthetic table")
    }

    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.table.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.table.dim
    }

    pub fn token(&self, code: usize) -> &str {
        &self.table.tokens[code]
    }

    pub fn tokens(&self) -> &[String] {
        &self.table.tokens
    }

    pub fn token_id(&self, code: usize) -> u32 {
        self.table.token_ids[code]
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.table.token_ids
    }

    pub fn embedding(&self, code: usize) -> &[f64] {
        let d = self.table.dim;
        &self.table.embeddings[code * d..(code + 1) * d]
    }

    pub fn embeddings(&self) -> &[f64] {
        &self.table.embeddings
    }

    pub fn is_active(&self, code: usize) -> bool {
        self.active[code]
    }

    /// Number of selectable codes (the refined subset size).
    pub fn active_len(&self) -> usize {
        self.active_count
    }

    pub fn active_codes(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().enumerate().filter(|(_, &a)| a).map(|(i, _)| i)
    }

    /// Applies `rules`, masking every token they reject.
    pub fn refine(&self, rules: &RefineRules) -> Result<Self, CodebookError> {
        let active: Vec<bool> = self
            .table
            .tokens
            .iter()
            .zip(&self.active)
            .map(|(t, &a)| a && rules.keep(t))
            .collect();
        let active_count = active.iter().filter(|&&a| a).count();
        if active_count == 0 {
            return Err(CodebookError::EmptyRefinement);
        }
        Ok(Self {
            table: Arc::clone(&self.table),
            metric: self.metric,
            active,
            active_count,
        })
    }

    /// Exact search over selectable codes. Under cosine the result maximizes
    /// `cos(h, e_c)`; under euclidean it minimizes `‖h − e_c‖`. Ties go to
    /// the lowest code index.
    pub fn nearest(&self, h: &[f64]) -> Result<(usize, &[f64]), CodebookError> {
        let c = self.nearest_index(h)?;
        Ok((c, self.embedding(c)))
    }

    pub fn nearest_index(&self, h: &[f64]) -> Result<usize, CodebookError> {
        let d = self.table.dim;
        if h.len() != d {
            return Err(CodebookError::Dim {
                expected: d,
                found: h.len(),
            });
        }
        if self.active_count == 0 {
            return Err(CodebookError::NoCodes);
        }
        let emb = &self.table.embeddings;
        let mut best = usize::MAX;
        match self.metric {
            Metric::Cosine => {
                let hn = dot(h, h).sqrt();
                if hn == 0.0 {
                    return Err(CodebookError::ZeroQuery);
                }
                let mut best_score = f64::NEG_INFINITY;
                for c in 0..self.len() {
                    if !self.active[c] {
                        continue;
                    }
                    let en = self.table.norms[c];
                    let s = if en == 0.0 {
                        0.0
                    } else {
                        dot(h, &emb[c * d..(c + 1) * d]) / (hn * en)
                    };
                    if s > best_score {
                        best_score = s;
                        best = c;
                    }
                }
            }
            Metric::Euclidean => {
                let mut best_dist = f64::INFINITY;
                for c in 0..self.len() {
                    if !self.active[c] {
                        continue;
                    }
                    let e = &emb[c * d..(c + 1) * d];
                    let dist: f64 = h.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
                    if dist < best_dist {
                        best_dist = dist;
                        best = c;
                    }
                }
            }
        }
        if best == usize::MAX {
            // Every score was NaN.
            return Err(CodebookError::Format("query contains non-finite values".into()));
        }
        Ok(best)
    }
}

const TILE: usize = 4;

/// [`dot`] of each query with each of `C` codes, with the same
/// accumulation order.
#[inline]
fn dot_tile<const C: usize>(q: &[&[f64]; TILE], e: [&[f64]; C]) -> [[f64; TILE]; C] {
    let n = e[0].len() / 4;
    let ec: [&[[f64; 4]]; C] = std::array::from_fn(|c| &e[c].as_chunks::<4>().0[..n]);
    let qc: [&[[f64; 4]]; TILE] = std::array::from_fn(|t| &q[t].as_chunks::<4>().0[..n]);
    let mut acc = [[[0.0f64; 4]; TILE]; C];
    for i in 0..n {
        for c in 0..C {
            let ev = &ec[c][i];
            for t in 0..TILE {
                let qv = &qc[t][i];
                for l in 0..4 {
                    acc[c][t][l] += qv[l] * ev[l];
                }
            }
        }
    }
    let base = n * 4;
    std::array::from_fn(|c| {
        std::array::from_fn(|t| {
            let mut tail = 0.0;
            for (j, &ev) in e[c][base..].iter().enumerate() {
                tail += q[t][base + j] * ev;
            }
            let a = &acc[c][t];
            (a[0] + a[1]) + (a[2] + a[3]) + tail
        })
    })
}

/// Squared euclidean distance of each query to `e`, summed in index order.
#[inline]
fn sq_dist_tile(q: &[&[f64]; TILE], e: &[f64]) -> [f64; TILE] {
    let mut out = [0.0; TILE];
    for (j, &ev) in e.iter().enumerate() {
        for t in 0..TILE {
            let d = q[t][j] - ev;
            out[t] += d * d;
        }
    }
    out
}

impl Codebook {
    /// [`Codebook::nearest_index`] for every row of a row-major `n × dim`
    /// block, with identical results. `None` marks a zero query under the
    /// cosine metric.
    pub fn nearest_batch(&self, queries: &[f64]) -> Result<Vec<Option<usize>>, CodebookError> {
        let d = self.table.dim;
        if d == 0 || !queries.len().is_multiple_of(d) {
            return Err(CodebookError::Dim {
                expected: d,
                found: queries.len(),
            });
        }
        if self.active_count == 0 {
            return Err(CodebookError::NoCodes);
        }
        let n = queries.len() / d;
        let emb = &self.table.embeddings;
        let mut out = vec![None; n];
        let zero = vec![0.0; d];
        for start in (0..n).step_by(TILE) {
            let live = (n - start).min(TILE);
            let mut q: [&[f64]; TILE] = [&zero; TILE];
            for (t, slot) in q.iter_mut().enumerate().take(live) {
                *slot = &queries[(start + t) * d..(start + t + 1) * d];
            }
            let mut best = [usize::MAX; TILE];
            match self.metric {
                Metric::Cosine => {
                    let mut hn = [0.0; TILE];
                    for t in 0..live {
                        hn[t] = dot(q[t], q[t]).sqrt();
                    }
                    let mut best_score = [f64::NEG_INFINITY; TILE];
                    let mut consider = |c: usize, dots: &[f64; TILE]| {
                        if !self.active[c] {
                            return;
                        }
                        let en = self.table.norms[c];
                        for t in 0..live {
                            let s = if en == 0.0 { 0.0 } else { dots[t] / (hn[t] * en) };
                            if s > best_score[t] {
                                best_score[t] = s;
                                best[t] = c;
                            }
                        }
                    };
                    let row = |c: usize| &emb[c * d..(c + 1) * d];
                    let pairs = self.len() / 2 * 2;
                    for c in (0..pairs).step_by(2) {
                        let [a, b] = dot_tile(&q, [row(c), row(c + 1)]);
                        consider(c, &a);
                        consider(c + 1, &b);
                    }
                    for c in pairs..self.len() {
                        let [a] = dot_tile(&q, [row(c)]);
                        consider(c, &a);
                    }
                    for t in 0..live {
                        if hn[t] == 0.0 {
                            best[t] = usize::MAX - 1;
                        }
                    }
                }
                Metric::Euclidean => {
                    let mut best_dist = [f64::INFINITY; TILE];
                    for c in 0..self.len() {
                        if !self.active[c] {
                            continue;
                        }
                        let dist = sq_dist_tile(&q, &emb[c * d..(c + 1) * d]);
                        for t in 0..live {
                            if dist[t] < best_dist[t] {
                                best_dist[t] = dist[t];
                                best[t] = c;
                            }
                        }
                    }
                }
            }
            for t in 0..live {
                out[start + t] = match best[t] {
                    usize::MAX => return Err(CodebookError::Format("query contains non-finite values".into())),
                    b if b == usize::MAX - 1 => None,
                    b => Some(b),
                };
            }
        }
        Ok(out)
    }
}

/// Nearest selectable code for `h`; see [`Codebook::nearest`].
pub fn nearest_code<'a>(cb: &'a Codebook, h: &[f64]) -> Result<(usize, &'a [f64]), CodebookError> {
    cb.nearest(h)
}
