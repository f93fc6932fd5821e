//! Prediction and reconstruction heads and the composite objective.
//!
//! The classifier reads the concatenated layer views; the feature head and
//! the inner-product edge decoder read the final-layer state.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{dot, sigmoid, softmax, weighted_bce_value, Tape, Tensor, TensorError, Var};
use crate::encoder::{BatchOutput, ModelParams, NodeEncoding, ParamVars};
use crate::graph::{EdgeBatch, Graph};

#[derive(Debug, Error)]
pub enum HeadsError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite loss term {name}: {value}")]
    NonFinite { name: &'static str, value: f64 },
    #[error("node {0} is not a target of this batch")]
    NotTarget(usize),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Weights of the auxiliary terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_feat: f64,
    pub lambda_adj: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_feat: 0.1,
            lambda_adj: 0.1,
            beta: 0.25,
        }
    }
}

/// Unweighted loss terms, except `commitment` which already includes `β`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub label_ce: f64,
    pub feature_mse: f64,
    pub adjacency_wbce: f64,
    pub commitment: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub label_ce: f64,
    pub feature_mse: f64,
    pub adjacency_wbce: f64,
    pub commitment: f64,
    pub total: f64,
    pub weights: LossWeights,
}

/// `label_ce + λ_feat·feature_mse + λ_adj·adjacency_wbce + commitment`.
pub fn total_loss(parts: LossParts, weights: LossWeights) -> Result<LossBreakdown, HeadsError> {
    let named = [
        ("label_ce", parts.label_ce),
        ("feature_mse", parts.feature_mse),
        ("adjacency_wbce", parts.adjacency_wbce),
        ("commitment", parts.commitment),
    ];
    for (name, value) in named {
        if !value.is_finite() {
            return Err(HeadsError::NonFinite { name, value });
        }
    }
    let total = parts.label_ce + weights.lambda_feat * parts.feature_mse + weights.lambda_adj * parts.adjacency_wbce + parts.commitment;
    Ok(LossBreakdown {
        label_ce: parts.label_ce,
        feature_mse: parts.feature_mse,
        adjacency_wbce: parts.adjacency_wbce,
        commitment: parts.commitment,
        total,
        weights,
    })
}

/// Classifier input for an encoding: every view when the classifier was
/// built for all of them, otherwise the last view only.
fn classifier_input(enc: &NodeEncoding, params: &ModelParams) -> Result<Vec<f64>, HeadsError> {
    let dim = params.dim();
    let want = params.classifier.input_dim();
    let views: Vec<&Vec<f64>> = if want == dim {
        enc.per_layer.last().map(|l| &l.view).into_iter().collect()
    } else {
        enc.per_layer.iter().map(|l| &l.view).collect()
    };
    let x: Vec<f64> = views.into_iter().flatten().copied().collect();
    if x.len() != want {
        return Err(HeadsError::Shape(format!(
            "classifier takes {want} inputs, encoding provides {}",
            x.len()
        )));
    }
    Ok(x)
}

/// Class logits for one encoding.
pub fn logits(enc: &NodeEncoding, params: &ModelParams) -> Result<Vec<f64>, HeadsError> {
    Ok(params.classifier.apply(&classifier_input(enc, params)?))
}

/// Class probabilities for one encoding.
pub fn classify(enc: &NodeEncoding, params: &ModelParams) -> Result<Vec<f64>, HeadsError> {
    Ok(softmax(&logits(enc, params)?))
}

/// Mean squared error between the reconstruction of the final embedding
/// and the node's features.
pub fn feature_recon_loss(enc: &NodeEncoding, x_v: &[f64], params: &ModelParams) -> Result<f64, HeadsError> {
    if x_v.len() != params.recon.output_dim() || enc.final_embedding.len() != params.recon.input_dim() {
        return Err(HeadsError::Shape(format!(
            "reconstruction head maps {} to {}, got embedding {} and target {}",
            params.recon.input_dim(),
            params.recon.output_dim(),
            enc.final_embedding.len(),
            x_v.len()
        )));
    }
    let out = params.recon.apply(&enc.final_embedding);
    Ok(out.iter().zip(x_v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x_v.len() as f64)
}

/// Inner-product edge probability `σ(h_u · h_v)` of two final embeddings.
pub fn edge_score(enc_u: &NodeEncoding, enc_v: &NodeEncoding) -> Result<f64, HeadsError> {
    let (a, b) = (&enc_u.final_embedding, &enc_v.final_embedding);
    if a.len() != b.len() {
        return Err(HeadsError::Shape(format!("embeddings of dim {} and {}", a.len(), b.len())));
    }
    Ok(sigmoid(dot(a, b)))
}

/// Weighted binary cross-entropy of edge probabilities against a batch,
/// with the weight on the positive term only.
pub fn adjacency_loss(scores: &[f64], batch: &EdgeBatch) -> Result<f64, HeadsError> {
    adjacency_loss_with(scores, batch, false)
}

/// As [`adjacency_loss`]; `symmetric` also weights the negative term.
pub fn adjacency_loss_with(scores: &[f64], batch: &EdgeBatch, symmetric: bool) -> Result<f64, HeadsError> {
    if scores.len() != batch.len() || scores.is_empty() {
        return Err(HeadsError::Shape(format!("{} scores for {} pairs", scores.len(), batch.len())));
    }
    Ok(weighted_bce_value(scores, &batch.targets(), &batch.weights, symmetric))
}

/// Tape handles for each term of the objective on one batch.
pub struct Objective {
    pub total: Var,
    pub label_ce: Var,
    pub feature_mse: Option<Var>,
    pub adjacency_wbce: Option<Var>,
    /// `β`-weighted.
    pub commitment: Option<Var>,
    pub weights: LossWeights,
}

impl Objective {
    pub fn breakdown(&self, tape: &Tape) -> Result<LossBreakdown, HeadsError> {
        let get = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
        let parts = LossParts {
            label_ce: tape.value(self.label_ce).item(),
            feature_mse: get(self.feature_mse),
            adjacency_wbce: get(self.adjacency_wbce),
            commitment: get(self.commitment),
        };
        total_loss(parts, self.weights)
    }
}

/// Terms that are switched on for a batch objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectiveSpec {
    pub weights: LossWeights,
    /// Classify from every view rather than the last one.
    pub multi_view: bool,
    pub symmetric_adjacency: bool,
}

/// Class logits for every target of a batch.
pub fn logits_on_tape(tape: &mut Tape, vars: &ParamVars, out: &BatchOutput, multi_view: bool) -> Result<Var, HeadsError> {
    let mut x = *out.views.last().expect("T >= 1");
    if multi_view {
        x = out.views[0];
        for &v in &out.views[1..] {
            x = tape.concat_cols(x, v)?;
        }
    }
    Ok(tape.affine(x, vars.classifier.0, vars.classifier.1)?)
}

/// Records the batch objective: label cross-entropy on `labeled`, feature
/// reconstruction of every target, weighted BCE on `edges`, and the
/// commitment term when the forward pass quantized.
pub fn objective_on_tape(
    tape: &mut Tape,
    vars: &ParamVars,
    out: &BatchOutput,
    g: &Graph,
    labeled: &[usize],
    edges: Option<&EdgeBatch>,
    spec: ObjectiveSpec,
) -> Result<Objective, HeadsError> {
    let targets = out.targets();
    let row = |v: usize| targets.binary_search(&v).map_err(|_| HeadsError::NotTarget(v));
    let w = spec.weights;
    let mut parts = Vec::new();
    let mut coeffs = Vec::new();

    let logits = logits_on_tape(tape, vars, out, spec.multi_view)?;
    let rows = labeled.iter().map(|&v| row(v)).collect::<Result<Vec<_>, _>>()?;
    let picked = tape.gather_rows(logits, rows)?;
    let label_ce = tape.softmax_cross_entropy(picked, labeled.iter().map(|&v| g.label(v)).collect())?;
    parts.push(label_ce);
    coeffs.push(1.0);

    let h = out.final_hidden();
    let feature_mse = if w.lambda_feat != 0.0 {
        let recon = tape.affine(h, vars.recon.0, vars.recon.1)?;
        let f = g.num_features();
        let mut x = Vec::with_capacity(targets.len() * f);
        for &v in targets {
            x.extend_from_slice(g.feature_row(v));
        }
        let m = tape.mse(recon, Tensor::new(targets.len(), f, x)?)?;
        parts.push(m);
        coeffs.push(w.lambda_feat);
        Some(m)
    } else {
        None
    };

    let adjacency_wbce = match edges {
        Some(batch) if w.lambda_adj != 0.0 && !batch.is_empty() => {
            let pairs = batch
                .pairs
                .iter()
                .map(|&(u, v)| Ok((row(u)?, row(v)?)))
                .collect::<Result<Vec<_>, HeadsError>>()?;
            let s = tape.pair_dot(h, pairs)?;
            let p = tape.sigmoid(s);
            let l = tape.weighted_bce(p, batch.targets(), batch.weights.clone(), spec.symmetric_adjacency)?;
            parts.push(l);
            coeffs.push(w.lambda_adj);
            Some(l)
        }
        _ => None,
    };

    let commitment = match out.commitment {
        Some(c) => {
            let c = tape.scale(c, w.beta);
            parts.push(c);
            coeffs.push(1.0);
            Some(c)
        }
        None => None,
    };

    let total = tape.weighted_sum(parts, coeffs)?;
    Ok(Objective {
        total,
        label_ce,
        feature_mse,
        adjacency_wbce,
        commitment,
        weights: w,
    })
}
