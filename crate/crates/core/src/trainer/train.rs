use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::baseline::sage_logits;
use super::metrics::{EpochRecord, MetricsLog};
use super::optim::Optimizer;
use super::{ModelKind, TrainConfig, TrainerError};
use crate::autodiff::{Tape, Tensor};
use crate::codebook::{Codebook, CodeUsage};
use crate::encoder::{BatchOutput, Encoder, ModelParams};
use crate::graph::{sample_edges, EdgeBatch, Graph};
use crate::heads::{logits_on_tape, objective_on_tape, HeadsError, LossBreakdown, LossWeights};

/// Nodes per forward pass during evaluation.
const EVAL_CHUNK: usize = 512;

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub log: MetricsLog,
    /// Codes picked for labeled batch nodes during the final epoch.
    pub usage: Option<CodeUsage>,
    /// The codebook the run quantized against.
    pub codebook: Codebook,
}

pub(crate) fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut z = seed
        .wrapping_add(a.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(b.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Fraction of positions where `predicted` equals `truth`.
pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    if truth.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(truth).filter(|(p, t)| p == t).count() as f64 / truth.len() as f64
}

fn breakdown_mean(sum: &LossBreakdown, n: usize, weights: LossWeights) -> LossBreakdown {
    let d = n.max(1) as f64;
    LossBreakdown {
        label_ce: sum.label_ce / d,
        feature_mse: sum.feature_mse / d,
        adjacency_wbce: sum.adjacency_wbce / d,
        commitment: sum.commitment / d,
        total: sum.total / d,
        weights,
    }
}

fn accumulate(acc: &mut LossBreakdown, b: &LossBreakdown) {
    acc.label_ce += b.label_ce;
    acc.feature_mse += b.feature_mse;
    acc.adjacency_wbce += b.adjacency_wbce;
    acc.commitment += b.commitment;
    acc.total += b.total;
}

fn record_codes(usage: &mut CodeUsage, out: &BatchOutput, nodes: &[usize]) {
    let blocks = &out.blocks;
    let t_max = blocks.layers.len();
    for (t, layer) in (1..=t_max).zip(&out.codes) {
        if layer.sequences.is_empty() {
            continue;
        }
        let at = if t < t_max { t + 1 } else { t };
        for &v in nodes {
            let j = blocks.position(at, v).expect("batch node at every layer");
            for &c in &layer.sequences[j].codes {
                usage.record(t - 1, c);
            }
        }
    }
}

/// Trains a model on the train split of `g`.
///
/// `cb` is the unrefined codebook; the configured metric and, if toggled,
/// token refinement are applied here. Each epoch shuffles the train nodes
/// with a seeded generator; each step derives its own seed for neighbor
/// sampling, edge sampling and dropout.
pub fn train(g: &Graph, cfg: &TrainConfig, cb: &Codebook) -> Result<TrainOutcome, TrainerError> {
    cfg.validate()?;
    let train_nodes = g.splits().train.clone();
    if train_nodes.is_empty() {
        return Err(TrainerError::EmptySplit("train".into()));
    }
    let codebook = cfg.prepare_codebook(cb)?;
    let enc_cfg = cfg.encoder_config();
    let encoder = Encoder::new(g, &codebook, &enc_cfg)?;
    let spec = cfg.objective_spec();

    let mut params = ModelParams::init(enc_cfg.model_shape(g.num_features(), g.num_classes()), cfg.seed);
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let mut opt = Optimizer::new(&sizes, params.encoder_tensor_count(), cfg.lr_encoder, cfg.lr_decoder, cfg.weight_decay);

    let use_edges = spec.weights.lambda_adj != 0.0 && cfg.edge_batch > 0 && g.num_edges() > 0;
    let val_nodes = g.splits().val.clone();
    let mut order = train_nodes;
    let mut shuffler = ChaCha8Rng::seed_from_u64(mix(cfg.seed, 0x5_4FF1E, 0));
    let mut log = MetricsLog::new();
    let mut usage = None;

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut shuffler);
        let mut epoch_usage = enc_cfg
            .quantization
            .then(|| CodeUsage::new(enc_cfg.layers, codebook.len()));
        let mut sum = LossBreakdown {
            label_ce: 0.0,
            feature_mse: 0.0,
            adjacency_wbce: 0.0,
            commitment: 0.0,
            total: 0.0,
            weights: spec.weights,
        };
        let mut correct = 0usize;
        let mut batches = 0usize;

        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let step_seed = mix(cfg.seed, epoch as u64 + 1, b as u64 + 1);
            let mut labeled = chunk.to_vec();
            labeled.sort_unstable();

            let edges: Option<EdgeBatch> = if use_edges {
                let n_pos = cfg.edge_batch.min(g.num_edges());
                Some(sample_edges(g, n_pos, n_pos, step_seed ^ 0xED6E)?)
            } else {
                None
            };
            let mut targets = labeled.clone();
            if let Some(e) = &edges {
                targets.extend(e.pairs.iter().flat_map(|&(u, v)| [u, v]));
            }
            let blocks = encoder.sample(&targets, step_seed)?;

            let mut tape = Tape::new();
            let vars = params.to_tape(&mut tape);
            let mut drop_rng = ChaCha8Rng::seed_from_u64(step_seed ^ 0xD0);
            let out = encoder.forward(&mut tape, &vars, blocks, Some(&mut drop_rng), None)?;
            let obj = objective_on_tape(&mut tape, &vars, &out, g, &labeled, edges.as_ref(), spec)?;
            let parts = match obj.breakdown(&tape) {
                Ok(p) => p,
                Err(HeadsError::NonFinite { name, value }) => {
                    return Err(TrainerError::NonFinite {
                        epoch,
                        batch: b,
                        detail: format!("{name} = {value}"),
                    })
                }
                Err(e) => return Err(e.into()),
            };
            if !tape.value(obj.total).item().is_finite() {
                return Err(TrainerError::NonFinite {
                    epoch,
                    batch: b,
                    detail: "total".into(),
                });
            }

            // Training accuracy on the labeled rows, read before the update.
            let logits = logits_on_tape(&mut tape, &vars, &out, spec.multi_view)?;
            let lv = tape.value(logits);
            for &v in &labeled {
                let r = out.targets().binary_search(&v).expect("labeled node is a target");
                if argmax(lv.row(r)) == g.label(v) {
                    correct += 1;
                }
            }
            if let Some(u) = epoch_usage.as_mut() {
                record_codes(u, &out, &labeled);
            }

            tape.backward(obj.total)?;
            let all = vars.all();
            let grads: Vec<Option<&Tensor>> = all.iter().map(|&v| tape.grad(v)).collect();
            let mut ps = params.tensors_mut();
            opt.step(&mut ps, &grads);

            accumulate(&mut sum, &parts);
            batches += 1;
        }

        let val_accuracy = if val_nodes.is_empty() {
            None
        } else {
            Some(evaluate_nodes(&params, g, cfg, &codebook, &val_nodes)?)
        };
        let perplexity = match &epoch_usage {
            Some(u) => (0..u.layers())
                .map(|t| u.perplexity(t).unwrap_or(1.0))
                .collect(),
            None => Vec::new(),
        };
        let record = EpochRecord {
            epoch,
            loss: breakdown_mean(&sum, batches, spec.weights),
            train_accuracy: correct as f64 / order.len() as f64,
            val_accuracy,
            perplexity,
            wall_seconds: start.elapsed().as_secs_f64(),
        };
        debug!(
            "epoch {epoch}: loss {:.4} train {:.3} val {:?} ppl {:?}",
            record.loss.total, record.train_accuracy, record.val_accuracy, record.perplexity
        );
        log.push(record);
        usage = epoch_usage;
    }
    if let Some(last) = log.last() {
        info!(
            "trained {} epochs: loss {:.4}, val accuracy {:?}",
            log.len(),
            last.loss.total,
            last.val_accuracy
        );
    }
    Ok(TrainOutcome {
        params,
        log,
        usage,
        codebook,
    })
}

/// Predicted class of each node, without dropout. Neighbor samples come from
/// [`TrainConfig::eval_seed`]; ties go to the lowest class index.
///
/// `cb` must be the codebook the model was trained with (see
/// [`TrainOutcome::codebook`]).
pub fn predict(params: &ModelParams, g: &Graph, cfg: &TrainConfig, cb: &Codebook, nodes: &[usize]) -> Result<Vec<usize>, TrainerError> {
    let enc_cfg = cfg.encoder_config();
    let seed = cfg.eval_seed();
    let mut out = Vec::with_capacity(nodes.len());
    for chunk in nodes.chunks(EVAL_CHUNK) {
        if cfg.model == ModelKind::Sage {
            let blocks = crate::graph::sample_blocks(g, chunk, &enc_cfg.fanouts, seed)?;
            let logits = sage_logits(g, params, &enc_cfg, &blocks);
            let outputs = blocks.outputs();
            for &v in chunk {
                let r = outputs.binary_search(&v).expect("target");
                out.push(argmax(&logits[r]));
            }
            continue;
        }
        let encoder = Encoder::new(g, cb, &enc_cfg)?;
        let blocks = encoder.sample(chunk, seed)?;
        let mut tape = Tape::new();
        let vars = params.to_tape(&mut tape);
        let fwd = encoder.forward(&mut tape, &vars, blocks, None, None)?;
        let logits = logits_on_tape(&mut tape, &vars, &fwd, enc_cfg.multi_view)?;
        let lv = tape.value(logits);
        for &v in chunk {
            let r = fwd.targets().binary_search(&v).expect("target");
            out.push(argmax(lv.row(r)));
        }
    }
    Ok(out)
}

fn evaluate_nodes(params: &ModelParams, g: &Graph, cfg: &TrainConfig, cb: &Codebook, nodes: &[usize]) -> Result<f64, TrainerError> {
    let pred = predict(params, g, cfg, cb, nodes)?;
    let truth: Vec<usize> = nodes.iter().map(|&v| g.label(v)).collect();
    Ok(accuracy(&pred, &truth))
}

/// Accuracy on the named split (`train`, `val` or `test`).
pub fn evaluate(params: &ModelParams, g: &Graph, split: &str, cfg: &TrainConfig, cb: &Codebook) -> Result<f64, TrainerError> {
    let nodes = g
        .splits()
        .get(split)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| TrainerError::EmptySplit(split.to_string()))?;
    evaluate_nodes(params, g, cfg, cb, nodes)
}
