use std::collections::HashSet;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Graph, GraphError};

/// Uniform sample without replacement of `min(fanout, degree)` neighbors,
/// returned in ascending id order.
fn sample_k<R: Rng>(neighbors: &[usize], fanout: usize, rng: &mut R) -> Vec<usize> {
    if fanout >= neighbors.len() {
        return neighbors.to_vec();
    }
    let mut picks = index::sample(rng, neighbors.len(), fanout).into_vec();
    picks.sort_unstable();
    picks.into_iter().map(|i| neighbors[i]).collect()
}

/// Hop-by-hop neighbor samples rooted at one node.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborSample {
    /// `hops[i]` lists `(frontier node, sampled neighbors)` for hop `i + 1`.
    pub hops: Vec<Vec<(usize, Vec<usize>)>>,
}

/// GraphSAGE-style fanout sampling from `v`: hop `i` samples up to
/// `fanouts[i]` neighbors of each node reached at hop `i - 1`.
pub fn sample_neighbors(g: &Graph, v: usize, fanouts: &[usize], seed: u64) -> Result<NeighborSample, GraphError> {
    g.check_node(v)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frontier = vec![v];
    let mut hops = Vec::with_capacity(fanouts.len());
    for &f in fanouts {
        let layer: Vec<(usize, Vec<usize>)> = frontier
            .iter()
            .map(|&u| (u, sample_k(g.neighbors(u), f, &mut rng)))
            .collect();
        let mut seen = HashSet::new();
        frontier = layer
            .iter()
            .flat_map(|(_, s)| s.iter().copied())
            .filter(|u| seen.insert(*u))
            .collect();
        hops.push(layer);
    }
    Ok(NeighborSample { hops })
}

/// One message-passing layer of a sampled computation graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    /// Output nodes, sorted and unique.
    pub nodes: Vec<usize>,
    /// Position of each output node in the previous layer's node list.
    pub self_pos: Vec<usize>,
    /// Sampled neighbors of each output node, as positions in the previous
    /// layer's node list.
    pub neigh_pos: Vec<Vec<usize>>,
}

/// Layered computation graph for a set of target nodes.
///
/// `inputs` are the nodes whose raw features enter layer 1; `layers[t - 1]`
/// produces layer `t` for `layers[t - 1].nodes`. The final layer's nodes are
/// the (deduplicated) targets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Blocks {
    pub inputs: Vec<usize>,
    pub layers: Vec<Block>,
}

impl Blocks {
    pub fn nodes_at(&self, t: usize) -> &[usize] {
        if t == 0 {
            &self.inputs
        } else {
            &self.layers[t - 1].nodes
        }
    }

    pub fn outputs(&self) -> &[usize] {
        self.nodes_at(self.layers.len())
    }

    /// Position of node `v` in the layer-`t` node list.
    pub fn position(&self, t: usize, v: usize) -> Option<usize> {
        self.nodes_at(t).binary_search(&v).ok()
    }
}

/// Seed of the sample drawn for node `u` at layer `t` of a block set.
fn node_seed(seed: u64, t: usize, u: usize) -> u64 {
    let mut z = seed ^ ((t as u64) << 40 ^ u as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples a layered computation graph for `targets`.
///
/// Layer `t` of `T = fanouts.len()` draws up to `fanouts[T - t]` neighbors
/// per node, so `fanouts[0]` applies to the targets' own neighborhoods.
/// Each (layer, node) sample comes from its own stream derived from `seed`,
/// so a node's sampled computation tree does not depend on which other
/// targets share the batch.
pub fn sample_blocks(g: &Graph, targets: &[usize], fanouts: &[usize], seed: u64) -> Result<Blocks, GraphError> {
    for &v in targets {
        g.check_node(v)?;
    }
    let t_max = fanouts.len();
    let mut out_nodes: Vec<usize> = targets.to_vec();
    out_nodes.sort_unstable();
    out_nodes.dedup();

    let mut sampled: Vec<(Vec<usize>, Vec<Vec<usize>>)> = Vec::with_capacity(t_max);
    for t in (1..=t_max).rev() {
        let f = fanouts[t_max - t];
        let samples: Vec<Vec<usize>> = out_nodes
            .iter()
            .map(|&u| {
                let mut rng = ChaCha8Rng::seed_from_u64(node_seed(seed, t, u));
                sample_k(g.neighbors(u), f, &mut rng)
            })
            .collect();
        let mut in_nodes: Vec<usize> = out_nodes
            .iter()
            .copied()
            .chain(samples.iter().flatten().copied())
            .collect();
        in_nodes.sort_unstable();
        in_nodes.dedup();
        sampled.push((std::mem::replace(&mut out_nodes, in_nodes), samples));
    }
    let inputs = out_nodes;
    sampled.reverse();

    let mut layers = Vec::with_capacity(t_max);
    let mut prev: &[usize] = &inputs;
    let pos = |list: &[usize], v: usize| list.binary_search(&v).expect("sampled nodes are in the previous layer");
    for (nodes, samples) in sampled {
        let self_pos = nodes.iter().map(|&u| pos(prev, u)).collect();
        let neigh_pos = samples
            .iter()
            .map(|s| s.iter().map(|&w| pos(prev, w)).collect())
            .collect();
        layers.push(Block {
            nodes,
            self_pos,
            neigh_pos,
        });
        prev = &layers.last().unwrap().nodes;
    }
    Ok(Blocks { inputs, layers })
}

/// Labeled node pairs for adjacency reconstruction.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeBatch {
    pub pairs: Vec<(usize, usize)>,
    /// `true` when the pair is an edge of the source graph.
    pub labels: Vec<bool>,
    /// `N / (2 · N_i)` where `N_i` counts pairs sharing this pair's label.
    pub weights: Vec<f64>,
}

impl EdgeBatch {
    pub fn new(pairs: Vec<(usize, usize)>, labels: Vec<bool>) -> Self {
        let n = labels.len() as f64;
        let pos = labels.iter().filter(|&&y| y).count() as f64;
        let neg = labels.len() as f64 - pos;
        let weights = labels
            .iter()
            .map(|&y| n / (2.0 * if y { pos } else { neg }))
            .collect();
        Self {
            pairs,
            labels,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.labels.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect()
    }
}

/// Draws `n_pos` distinct edges and `n_neg` distinct non-edges (never a
/// node paired with itself), positives first.
pub fn sample_edges(g: &Graph, n_pos: usize, n_neg: usize, seed: u64) -> Result<EdgeBatch, GraphError> {
    let m = g.num_edges();
    if n_pos > m {
        return Err(GraphError::TooManyPositives {
            requested: n_pos,
            available: m,
        });
    }
    let n = g.num_nodes();
    let non_edges = n * n.saturating_sub(1) / 2 - m;
    if n_neg > non_edges {
        return Err(GraphError::NoNegatives {
            requested: n_neg,
            available: non_edges,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(usize, usize)> = g.edges().collect();
    let mut picks = index::sample(&mut rng, m, n_pos).into_vec();
    picks.sort_unstable();
    let mut pairs: Vec<(usize, usize)> = picks.into_iter().map(|i| edges[i]).collect();

    if n_neg > 0 {
        let mut chosen = HashSet::with_capacity(n_neg);
        if non_edges < 4 * n_neg {
            // Dense graph: enumerate the complement instead of rejecting.
            let mut all = Vec::with_capacity(non_edges);
            for u in 0..n {
                for v in u + 1..n {
                    if !g.has_edge(u, v) {
                        all.push((u, v));
                    }
                }
            }
            let mut idx = index::sample(&mut rng, all.len(), n_neg).into_vec();
            idx.sort_unstable();
            pairs.extend(idx.into_iter().map(|i| all[i]));
        } else {
            while chosen.len() < n_neg {
                let u = rng.random_range(0..n);
                let v = rng.random_range(0..n);
                if u == v || g.has_edge(u, v) {
                    continue;
                }
                let p = (u.min(v), u.max(v));
                if chosen.insert(p) {
                    pairs.push(p);
                }
            }
        }
    }
    let labels = (0..n_pos + n_neg).map(|i| i < n_pos).collect();
    Ok(EdgeBatch::new(pairs, labels))
}
