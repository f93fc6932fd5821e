use rand_chacha::ChaCha8Rng;

use super::{Activation, EncoderConfig, EncoderError, Linear, ModelParams, ParamVars};
use crate::autodiff::{Tape, Tensor, Var};
use crate::codebook::Codebook;
use crate::graph::{sample_blocks, Blocks, Graph};
use crate::quantizer::{quantize_pinned, quantize_with_ste, residual_quantize, CodeSequence, Pin};

/// `σ(W · [h_v + pooled_z | h_neigh] + b)` for one node.
pub fn layer_forward(
    h_v: &[f64],
    pooled_z: &[f64],
    h_neigh: &[f64],
    layer: &Linear,
    activation: Activation,
) -> Result<Vec<f64>, EncoderError> {
    if h_v.len() != pooled_z.len() || h_v.len() + h_neigh.len() != layer.input_dim() {
        return Err(EncoderError::Config(format!(
            "layer expects {} inputs, got self {} (+ pooled {}) and neighbors {}",
            layer.input_dim(),
            h_v.len(),
            pooled_z.len(),
            h_neigh.len()
        )));
    }
    let input: Vec<f64> = h_v
        .iter()
        .zip(pooled_z)
        .map(|(a, b)| a + b)
        .chain(h_neigh.iter().copied())
        .collect();
    Ok(layer.apply(&input).into_iter().map(|v| activation.apply(v)).collect())
}

/// Codes chosen at one layer of a batch.
#[derive(Clone, Debug, Default)]
pub struct LayerCodes {
    /// Rows of that layer's hidden state that were quantized.
    pub positions: Vec<usize>,
    /// One sequence per quantized row; empty when codes were pinned.
    pub sequences: Vec<CodeSequence>,
    pub pins: Vec<Pin>,
}

/// Tape values produced by one batched forward pass.
pub struct BatchOutput {
    pub blocks: Blocks,
    /// `hidden[t]` is `h^t` for `blocks.nodes_at(t)`.
    pub hidden: Vec<Var>,
    /// Layer-`t` view of each target (`views[t − 1]`), rows in
    /// `blocks.outputs()` order.
    pub views: Vec<Var>,
    /// Unweighted commitment distance summed over layers; `None` without
    /// quantization.
    pub commitment: Option<Var>,
    pub codes: Vec<LayerCodes>,
}

impl BatchOutput {
    /// Final-layer states of the targets.
    pub fn final_hidden(&self) -> Var {
        *self.hidden.last().expect("at least the input layer")
    }

    pub fn targets(&self) -> &[usize] {
        self.blocks.outputs()
    }
}

/// One layer of a [`NodeEncoding`].
#[derive(Clone, Debug, PartialEq)]
pub struct LayerEncoding {
    /// `h^t_v` before quantization.
    pub hidden: Vec<f64>,
    pub codes: CodeSequence,
    /// Pooled quantized vector.
    pub pooled: Vec<f64>,
    /// `h^t_v − h^{t−1}_v`.
    pub inter_residual: Vec<f64>,
    /// What the classifier sees for this view: `pooled` when quantization is
    /// on, `hidden` otherwise.
    pub view: Vec<f64>,
}

/// Per-view code sequences of one node, 1-hop first.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeEncoding {
    pub center: usize,
    pub per_layer: Vec<LayerEncoding>,
    pub final_embedding: Vec<f64>,
}

impl NodeEncoding {
    /// Code indices, `T × K`.
    pub fn code_ids(&self) -> Vec<Vec<usize>> {
        self.per_layer.iter().map(|l| l.codes.codes.clone()).collect()
    }

    pub fn tokens<'a>(&self, cb: &'a Codebook) -> Vec<Vec<&'a str>> {
        self.per_layer
            .iter()
            .map(|l| l.codes.codes.iter().map(|&c| cb.token(c)).collect())
            .collect()
    }
}

/// A graph, codebook and configuration bound together for forward passes.
pub struct Encoder<'a> {
    pub graph: &'a Graph,
    pub codebook: &'a Codebook,
    pub config: &'a EncoderConfig,
}

impl<'a> Encoder<'a> {
    pub fn new(graph: &'a Graph, codebook: &'a Codebook, config: &'a EncoderConfig) -> Result<Self, EncoderError> {
        config.validate()?;
        if config.quantization && codebook.dim() != config.dim {
            return Err(EncoderError::Config(format!(
                "codebook dim {} differs from encoder dim {}",
                codebook.dim(),
                config.dim
            )));
        }
        Ok(Encoder {
            graph,
            codebook,
            config,
        })
    }

    pub fn sample(&self, targets: &[usize], seed: u64) -> Result<Blocks, EncoderError> {
        Ok(sample_blocks(self.graph, targets, &self.config.fanouts, seed)?)
    }

    fn input_features(&self, nodes: &[usize]) -> Tensor {
        let f = self.graph.num_features();
        let mut data = Vec::with_capacity(nodes.len() * f);
        for &v in nodes {
            data.extend_from_slice(self.graph.feature_row(v));
        }
        Tensor::new(nodes.len(), f, data).expect("sized")
    }

    /// Records the forward pass for `blocks` on `tape`.
    ///
    /// With `dropout` set, each layer applies dropout drawn from that
    /// generator. With `pins` set (one list per layer, aligned with the
    /// quantized rows), code selection is replaced by the pinned
    /// straight-through replay.
    pub fn forward(
        &self,
        tape: &mut Tape,
        vars: &ParamVars,
        blocks: Blocks,
        mut dropout: Option<&mut ChaCha8Rng>,
        pins: Option<&[Vec<Pin>]>,
    ) -> Result<BatchOutput, EncoderError> {
        let cfg = self.config;
        let t_max = cfg.layers;
        let k = cfg.effective_codes();
        let scale = cfg.pool_scale();

        let x = tape.constant(self.input_features(&blocks.inputs));
        let mut h = tape.affine(x, vars.input.0, vars.input.1)?;
        let mut hidden = vec![h];
        let mut views = Vec::with_capacity(t_max);
        let mut codes = Vec::with_capacity(t_max);
        let mut commitment: Option<Var> = None;
        let mut pooled: Option<Var> = None;

        for t in 1..=t_max {
            let block = &blocks.layers[t - 1];
            let mut own = tape.gather_rows(h, block.self_pos.clone())?;
            if let Some(p) = pooled.take() {
                own = tape.add(own, p)?;
            }
            let neigh = tape.segment_mean(h, block.neigh_pos.clone())?;
            let cat = tape.concat_cols(own, neigh)?;
            let (w, b) = vars.layers[t - 1];
            let mut a = tape.affine(cat, w, b)?;
            if let Some(rng) = dropout.as_deref_mut() {
                if cfg.dropout > 0.0 {
                    a = tape.dropout(a, cfg.dropout, rng)?;
                }
            }
            let h_t = match cfg.activation {
                Activation::Relu => tape.relu(a),
                Activation::Tanh => tape.tanh(a),
            };

            // Rows to quantize: the nodes the next layer needs, or the
            // targets at the last layer.
            let (positions, next_nodes): (Vec<usize>, &[usize]) = if t < t_max {
                (blocks.layers[t].self_pos.clone(), blocks.nodes_at(t + 1))
            } else {
                ((0..block.nodes.len()).collect(), blocks.nodes_at(t))
            };
            let target_rows: Vec<usize> = blocks
                .outputs()
                .iter()
                .map(|v| next_nodes.binary_search(v).expect("targets reach every layer"))
                .collect();

            if cfg.quantization {
                let hq = tape.gather_rows(h_t, positions.clone())?;
                let (q, anchors, layer) = match pins {
                    Some(p) => {
                        let (q, anchors) = quantize_pinned(tape, hq, &p[t - 1], scale)?;
                        let layer = LayerCodes {
                            positions,
                            sequences: Vec::new(),
                            pins: p[t - 1].clone(),
                        };
                        (q, anchors, layer)
                    }
                    None => {
                        let out = quantize_with_ste(tape, self.codebook, hq, k, scale)?;
                        let hv = tape.value(hq);
                        let layer_pins = out
                            .sequences
                            .iter()
                            .enumerate()
                            .map(|(r, s)| Pin::from_sequence(hv.row(r), s))
                            .collect();
                        let layer = LayerCodes {
                            positions,
                            sequences: out.sequences,
                            pins: layer_pins,
                        };
                        (out.value, out.anchors, layer)
                    }
                };
                let c = tape.group_sq_dist(hq, anchors, k)?;
                commitment = Some(match commitment {
                    Some(prev) => tape.weighted_sum(vec![prev, c], vec![1.0, 1.0])?,
                    None => c,
                });
                views.push(tape.gather_rows(q, target_rows)?);
                if cfg.inter_residual && t < t_max {
                    pooled = Some(q);
                }
                codes.push(layer);
            } else {
                let rows: Vec<usize> = target_rows.iter().map(|&r| positions[r]).collect();
                views.push(tape.gather_rows(h_t, rows)?);
                codes.push(LayerCodes::default());
            }
            hidden.push(h_t);
            h = h_t;
        }
        Ok(BatchOutput {
            blocks,
            hidden,
            views,
            commitment,
            codes,
        })
    }

    /// Deterministic (dropout-free) encodings of `nodes`, returned in the
    /// given order. Neighbor samples come from `seed`.
    pub fn encode_nodes(&self, params: &ModelParams, nodes: &[usize], seed: u64) -> Result<Vec<NodeEncoding>, EncoderError> {
        let cfg = self.config;
        let blocks = self.sample(nodes, seed)?;
        let mut tape = Tape::new();
        let vars = params.to_tape(&mut tape);
        let out = self.forward(&mut tape, &vars, blocks, None, None)?;
        let blocks = &out.blocks;
        let t_max = cfg.layers;
        let k = cfg.effective_codes();
        let scale = cfg.pool_scale();

        let mut encodings = Vec::with_capacity(nodes.len());
        for &v in nodes {
            let mut per_layer = Vec::with_capacity(t_max);
            for t in 1..=t_max {
                let row = |s: usize| blocks.position(s, v).expect("target present at every layer");
                let hidden = tape.value(out.hidden[t]).row(row(t)).to_vec();
                let prev = tape.value(out.hidden[t - 1]).row(row(t - 1));
                let inter_residual = hidden.iter().zip(prev).map(|(a, b)| a - b).collect();
                let codes = if cfg.quantization {
                    let j = if t < t_max { row(t + 1) } else { row(t) };
                    out.codes[t - 1].sequences[j].clone()
                } else {
                    residual_quantize(self.codebook, &hidden, k)?
                };
                let pooled: Vec<f64> = codes.sum().iter().map(|s| scale * s).collect();
                let view = if cfg.quantization { pooled.clone() } else { hidden.clone() };
                per_layer.push(LayerEncoding {
                    hidden,
                    codes,
                    pooled,
                    inter_residual,
                    view,
                });
            }
            let final_embedding = per_layer.last().expect("T >= 1").hidden.clone();
            encodings.push(NodeEncoding {
                center: v,
                per_layer,
                final_embedding,
            });
        }
        Ok(encodings)
    }

    pub fn encode_node(&self, params: &ModelParams, v: usize, seed: u64) -> Result<NodeEncoding, EncoderError> {
        Ok(self.encode_nodes(params, &[v], seed)?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{Metric, RefineRules};
    use crate::graph::Splits;
    use rand::{Rng, SeedableRng};

    fn path_graph(n: usize, features: usize, seed: u64) -> Graph {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = (0..n * features).map(|_| rng.random_range(-1.0..1.0)).collect();
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        Graph::new(n, edges, features, x, vec![0; n], vec!["a".into()], Splits::default())
            .unwrap()
            .0
    }

    fn small_cfg(dim: usize) -> EncoderConfig {
        EncoderConfig {
            dim,
            fanouts: vec![5, 5, 5],
            dropout: 0.0,
            ..EncoderConfig::default()
        }
    }

    #[test]
    fn layer_forward_selects_self_coordinates() {
        // Weight rows 0 and 1 copy the first two concatenated coordinates.
        let mut w = Tensor::zeros(4, 2);
        w.data_mut()[0] = 1.0;
        w.data_mut()[3] = 1.0;
        let layer = Linear { w, b: Tensor::zeros(1, 2) };
        let out = layer_forward(&[1.0, 0.0], &[0.0, 1.0], &[2.0, 2.0], &layer, Activation::Relu).unwrap();
        assert_eq!(out, vec![1.0, 1.0]);
        let zero = layer_forward(&[0.0; 2], &[0.0; 2], &[0.0; 2], &layer, Activation::Relu).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);
        assert!(layer_forward(&[0.0; 3], &[0.0; 3], &[0.0; 2], &layer, Activation::Relu).is_err());
    }

    #[test]
    fn layer_forward_matches_scalar_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = 8;
        let layer = Linear::glorot(2 * d, d, &mut rng);
        let layer = Linear {
            b: Tensor::row_vector((0..d).map(|_| rng.random_range(-0.5..0.5)).collect()),
            ..layer
        };
        let hv: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let pz: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hn: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = layer_forward(&hv, &pz, &hn, &layer, Activation::Tanh).unwrap();
        for j in 0..d {
            let mut s = layer.b.data()[j];
            for i in 0..d {
                s += (hv[i] + pz[i]) * layer.w.data()[i * d + j];
                s += hn[i] * layer.w.data()[(d + i) * d + j];
            }
            assert!((got[j] - s.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn batch_layer_one_matches_layer_forward() {
        let g = path_graph(6, 5, 1);
        let cfg = small_cfg(4);
        let cb = Codebook::synthetic(32, 4, 2);
        let params = ModelParams::init(cfg.model_shape(5, 1), 3);
        let enc = Encoder::new(&g, &cb, &cfg).unwrap();
        let e = enc.encode_node(&params, 2, 0).unwrap();
        let h0 = |v: usize| params.input.apply(g.feature_row(v));
        let neigh: Vec<f64> = h0(1).iter().zip(h0(3)).map(|(a, b)| (a + b) / 2.0).collect();
        let expect = layer_forward(&h0(2), &[0.0; 4], &neigh, &params.layers[0], cfg.activation).unwrap();
        for (a, b) in e.per_layer[0].hidden.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_and_determinism() {
        let g = path_graph(8, 5, 1);
        let cfg = small_cfg(4);
        let cb = Codebook::synthetic(64, 4, 2);
        let params = ModelParams::init(cfg.model_shape(5, 1), 3);
        let enc = Encoder::new(&g, &cb, &cfg).unwrap();
        let a = enc.encode_node(&params, 3, 9).unwrap();
        let b = enc.encode_node(&params, 3, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.per_layer.len(), 3);
        assert_eq!(a.code_ids().iter().map(Vec::len).sum::<usize>(), 9);
        // Batch membership does not change a node's encoding.
        let batch = enc.encode_nodes(&params, &[7, 3, 0], 9).unwrap();
        assert_eq!(batch[1], a);
    }

    #[test]
    fn isolated_node_still_gets_codes() {
        let g = Graph::new(3, [(1, 2)], 2, vec![1.0, -1.0, 0.5, 0.5, 0.2, 0.1], vec![0; 3], vec!["a".into()], Splits::default())
            .unwrap()
            .0;
        let cfg = small_cfg(4);
        let cb = Codebook::synthetic(16, 4, 5);
        let params = ModelParams::init(cfg.model_shape(2, 1), 4);
        let e = Encoder::new(&g, &cb, &cfg).unwrap().encode_node(&params, 0, 1).unwrap();
        for layer in &e.per_layer {
            assert_eq!(layer.codes.len(), 3);
            assert!(layer.codes.codes.iter().all(|&c| c < 16));
        }
    }

    #[test]
    fn views_are_local_to_their_hop() {
        // Node 0 on a path: node 3 is exactly three hops away.
        let g = path_graph(7, 5, 2);
        let mut cfg = small_cfg(6);
        cfg.activation = Activation::Tanh;
        let cb = Codebook::synthetic(128, 6, 7).with_metric(Metric::Euclidean);
        let params = ModelParams::init(cfg.model_shape(5, 1), 5);
        let base = Encoder::new(&g, &cb, &cfg).unwrap().encode_node(&params, 0, 3).unwrap();

        let mut x = g.features().to_vec();
        for v in &mut x[3 * 5..4 * 5] {
            *v += 5.0;
        }
        let edges: Vec<(usize, usize)> = g.edges().collect();
        let g2 = Graph::new(7, edges, 5, x, vec![0; 7], vec!["a".into()], Splits::default())
            .unwrap()
            .0;
        let moved = Encoder::new(&g2, &cb, &cfg).unwrap().encode_node(&params, 0, 3).unwrap();
        assert_eq!(base.per_layer[0], moved.per_layer[0]);
        assert_eq!(base.per_layer[1], moved.per_layer[1]);
        assert_ne!(base.per_layer[2].hidden, moved.per_layer[2].hidden);
    }

    #[test]
    fn codes_stay_inside_refined_subset() {
        let g = path_graph(10, 5, 4);
        let cfg = small_cfg(8);
        let cb = Codebook::synthetic_mixed(200, 8, 3).refine(&RefineRules::default()).unwrap();
        let params = ModelParams::init(cfg.model_shape(5, 1), 6);
        let all: Vec<usize> = (0..10).collect();
        let encs = Encoder::new(&g, &cb, &cfg).unwrap().encode_nodes(&params, &all, 0).unwrap();
        for e in encs {
            for c in e.code_ids().into_iter().flatten() {
                assert!(cb.is_active(c));
            }
        }
    }

    #[test]
    fn codebook_dim_must_match() {
        let g = path_graph(3, 2, 0);
        let cfg = small_cfg(4);
        let cb = Codebook::synthetic(8, 5, 0);
        assert!(Encoder::new(&g, &cb, &cfg).is_err());
    }
}
