//! Multi-view GraphSAGE encoder with quantized layer outputs.
//!
//! Layer `t` computes, for every node `v` it needs,
//!
//! ```text
//! h^t_v = σ(dropout(W^t · [h^{t−1}_v + pool(z^{t−1}_v) | mean_{u ∈ N(v)} h^{t−1}_u]))
//! ```
//!
//! then residually quantizes `h^t_v` into `K` codes `z^t_v`. The pooled codes
//! are added back to the node's own state in the next layer, and the pooled
//! vector of layer `t` is the node's `t`-hop view. `h^0_v` is a linear
//! projection of the node features and carries no codes.

mod forward;
mod params;

pub use forward::{layer_forward, BatchOutput, Encoder, LayerCodes, LayerEncoding, NodeEncoding};
pub use params::{Linear, ModelParams, ModelShape, ParamVars, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::TensorError;
use crate::codebook::CodebookError;
use crate::graph::GraphError;
use crate::quantizer::QuantizeError;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }
}

/// How the `K` codes of a layer are combined before re-injection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pool {
    #[default]
    Mean,
    Sum,
}

/// Architecture and the structural toggles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Number of layers `T`; layer `t` yields the `t`-hop view.
    pub layers: usize,
    pub dim: usize,
    /// Codes per view `K`.
    pub codes_per_view: usize,
    /// Neighbor fanout per hop, nearest hop first.
    pub fanouts: Vec<usize>,
    pub activation: Activation,
    pub pool: Pool,
    pub dropout: f64,
    /// Feed every layer's view to the classifier; otherwise only the last.
    pub multi_view: bool,
    /// Quantize layer outputs; otherwise views are the continuous states.
    pub quantization: bool,
    /// Use `K` residual steps per layer; otherwise a single code.
    pub intra_residual: bool,
    /// Add the pooled codes of layer `t` to the node state entering `t + 1`.
    pub inter_residual: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            layers: 3,
            dim: 64,
            codes_per_view: 3,
            fanouts: vec![25, 10, 10],
            activation: Activation::Relu,
            pool: Pool::Mean,
            dropout: 0.5,
            multi_view: true,
            quantization: true,
            intra_residual: true,
            inter_residual: true,
        }
    }
}

impl EncoderConfig {
    /// The configuration with every structural addition switched off: a
    /// plain GraphSAGE network classifying from its last layer.
    pub fn plain(mut self) -> Self {
        self.multi_view = false;
        self.quantization = false;
        self.intra_residual = false;
        self.inter_residual = false;
        self
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let bad = |m: String| Err(EncoderError::Config(m));
        if self.layers == 0 {
            return bad("layers must be at least 1".into());
        }
        if self.fanouts.len() != self.layers {
            return bad(format!("{} fanouts for {} layers", self.fanouts.len(), self.layers));
        }
        if self.codes_per_view == 0 {
            return bad("codes_per_view must be at least 1".into());
        }
        if self.dim == 0 {
            return bad("dim must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    /// Codes actually drawn per layer.
    pub fn effective_codes(&self) -> usize {
        if self.intra_residual {
            self.codes_per_view
        } else {
            1
        }
    }

    /// Views concatenated in front of the classifier.
    pub fn classifier_views(&self) -> usize {
        if self.multi_view {
            self.layers
        } else {
            1
        }
    }

    /// Factor applied to `Σ z` when pooling.
    pub fn pool_scale(&self) -> f64 {
        match self.pool {
            Pool::Mean => 1.0 / self.effective_codes() as f64,
            Pool::Sum => 1.0,
        }
    }

    pub fn model_shape(&self, features: usize, classes: usize) -> ModelShape {
        ModelShape {
            features,
            dim: self.dim,
            layers: self.layers,
            classes,
            classifier_views: self.classifier_views(),
        }
    }
}
