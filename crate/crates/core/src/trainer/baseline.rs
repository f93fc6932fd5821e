//! Plain GraphSAGE forward pass written with ordinary loops, used to train
//! and score the baseline and as a reference for the reduced encoder.

use crate::encoder::{layer_forward, EncoderConfig, ModelParams};
use crate::graph::{Blocks, Graph};

/// Hidden states per layer; `hidden[t][i]` belongs to `blocks.nodes_at(t)[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SageOutput {
    pub hidden: Vec<Vec<Vec<f64>>>,
}

impl SageOutput {
    pub fn final_rows(&self) -> &[Vec<f64>] {
        self.hidden.last().expect("input layer")
    }
}

fn segment_mean(rows: &[Vec<f64>], seg: &[usize], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    if seg.is_empty() {
        return out;
    }
    for &j in seg {
        for (o, v) in out.iter_mut().zip(&rows[j]) {
            *o += v;
        }
    }
    let inv = 1.0 / seg.len() as f64;
    for o in &mut out {
        *o *= inv;
    }
    out
}

/// Mean-aggregator SAGE over sampled `blocks`, no dropout. Only
/// `cfg.activation` is read; quantization, residues and views are ignored.
pub fn sage_forward(g: &Graph, params: &ModelParams, cfg: &EncoderConfig, blocks: &Blocks) -> SageOutput {
    let dim = params.dim();
    let mut h: Vec<Vec<f64>> = blocks.inputs.iter().map(|&v| params.input.apply(g.feature_row(v))).collect();
    let mut hidden = vec![h.clone()];
    let zeros = vec![0.0; dim];
    for (block, layer) in blocks.layers.iter().zip(&params.layers) {
        let next: Vec<Vec<f64>> = block
            .self_pos
            .iter()
            .zip(&block.neigh_pos)
            .map(|(&s, seg)| {
                let neigh = segment_mean(&h, seg, dim);
                layer_forward(&h[s], &zeros, &neigh, layer, cfg.activation).expect("shapes fixed by params")
            })
            .collect();
        hidden.push(next.clone());
        h = next;
    }
    SageOutput { hidden }
}

/// Class logits of every output node of `blocks`, read from the last layer.
pub fn sage_logits(g: &Graph, params: &ModelParams, cfg: &EncoderConfig, blocks: &Blocks) -> Vec<Vec<f64>> {
    sage_forward(g, params, cfg, blocks)
        .final_rows()
        .iter()
        .map(|h| params.classifier.apply(h))
        .collect()
}
