//! Seeded training and evaluation, plus the view-count sweep and the
//! toggle ablation built on top of them.

mod baseline;
mod harness;
mod metrics;
mod optim;
mod train;

pub use baseline::{sage_forward, sage_logits, SageOutput};
pub use harness::{ablate, ablation_ladder, full_toggle_matrix, sweep_views, AblationRow, SweepReport, SweepRow};
pub use metrics::{EpochRecord, MetricsLog};
pub use optim::Optimizer;
pub use train::{accuracy, evaluate, predict, train, TrainOutcome};

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::TensorError;
use crate::codebook::{Codebook, CodebookError, Metric, RefineRules};
use crate::encoder::{Activation, EncoderConfig, EncoderError, Pool};
use crate::graph::GraphError;
use crate::heads::{HeadsError, LossWeights, ObjectiveSpec};

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error("split {0:?} is empty or unknown")]
    EmptySplit(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Codebook(#[from] CodebookError),
    #[error(transparent)]
    Heads(#[from] HeadsError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Which network the harness trains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    /// The quantized multi-view encoder, shaped by the toggles.
    #[default]
    Dre,
    /// Plain GraphSAGE trained on the label loss only; toggles are ignored.
    Sage,
}

/// Structural switches, all on by default.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toggles {
    pub multi_view: bool,
    pub quantization: bool,
    pub intra_residual: bool,
    pub inter_residual: bool,
    pub token_refinement: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Toggles {
            multi_view: true,
            quantization: true,
            intra_residual: true,
            inter_residual: true,
            token_refinement: true,
        }
    }
}

impl Toggles {
    pub fn none() -> Self {
        Toggles {
            multi_view: false,
            quantization: false,
            intra_residual: false,
            inter_residual: false,
            token_refinement: false,
        }
    }

    /// Short label such as `mv+vq+intra`; `plain` when everything is off.
    pub fn label(&self) -> String {
        let parts: Vec<&str> = [
            (self.multi_view, "mv"),
            (self.quantization, "vq"),
            (self.intra_residual, "intra"),
            (self.inter_residual, "inter"),
            (self.token_refinement, "refine"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, s)| *s)
        .collect();
        if parts.is_empty() {
            "plain".into()
        } else {
            parts.join("+")
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub lr_encoder: f64,
    pub lr_decoder: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Encoder layers `T`.
    pub layers: usize,
    /// Views `D`; must equal `layers`.
    pub views: usize,
    /// Codes per view `K`.
    pub codes_per_view: usize,
    pub dim: usize,
    pub fanouts: Vec<usize>,
    pub metric: Metric,
    pub activation: Activation,
    pub pool: Pool,
    pub dropout: f64,
    pub beta: f64,
    pub lambda_feat: f64,
    pub lambda_adj: f64,
    /// Weight the negative term of the adjacency loss as well.
    pub symmetric_adjacency: bool,
    /// Positive (and as many negative) pairs per adjacency batch.
    pub edge_batch: usize,
    pub seed: u64,
    pub toggles: Toggles,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelKind::Dre,
            lr_encoder: 1e-3,
            lr_decoder: 1e-4,
            weight_decay: 5e-4,
            epochs: 200,
            batch_size: 64,
            layers: 3,
            views: 3,
            codes_per_view: 3,
            dim: 64,
            fanouts: vec![25, 10, 10],
            metric: Metric::Cosine,
            activation: Activation::Relu,
            pool: Pool::Mean,
            dropout: 0.5,
            beta: 0.25,
            lambda_feat: 0.1,
            lambda_adj: 0.1,
            symmetric_adjacency: false,
            edge_batch: 32,
            seed: 0,
            toggles: Toggles::default(),
        }
    }
}

impl TrainConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self, TrainerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| TrainerError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: TrainConfig = serde_json::from_str(&text).map_err(|source| TrainerError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), TrainerError> {
        let bad = |m: String| Err(TrainerError::Config(m));
        if !(self.lr_encoder >= 0.0 && self.lr_decoder >= 0.0) || (self.lr_encoder == 0.0 && self.lr_decoder == 0.0) {
            return bad("learning rates must be non-negative and not both zero".into());
        }
        if self.weight_decay < 0.0 {
            return bad("weight_decay must be non-negative".into());
        }
        if self.views != self.layers {
            return bad(format!("views ({}) must equal layers ({})", self.views, self.layers));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if self.beta < 0.0 || self.lambda_feat < 0.0 || self.lambda_adj < 0.0 {
            return bad("loss weights must be non-negative".into());
        }
        self.encoder_config().validate()?;
        Ok(())
    }

    /// Architecture implied by the model kind and toggles.
    pub fn encoder_config(&self) -> EncoderConfig {
        let t = self.toggles;
        let cfg = EncoderConfig {
            layers: self.layers,
            dim: self.dim,
            codes_per_view: self.codes_per_view,
            fanouts: self.fanouts.clone(),
            activation: self.activation,
            pool: self.pool,
            dropout: self.dropout,
            multi_view: t.multi_view,
            quantization: t.quantization,
            intra_residual: t.intra_residual,
            inter_residual: t.inter_residual,
        };
        match self.model {
            ModelKind::Dre => cfg,
            ModelKind::Sage => cfg.plain(),
        }
    }

    pub fn loss_weights(&self) -> LossWeights {
        match self.model {
            ModelKind::Dre => LossWeights {
                lambda_feat: self.lambda_feat,
                lambda_adj: self.lambda_adj,
                beta: self.beta,
            },
            ModelKind::Sage => LossWeights {
                lambda_feat: 0.0,
                lambda_adj: 0.0,
                beta: 0.0,
            },
        }
    }

    pub fn objective_spec(&self) -> ObjectiveSpec {
        ObjectiveSpec {
            weights: self.loss_weights(),
            multi_view: self.encoder_config().multi_view,
            symmetric_adjacency: self.symmetric_adjacency,
        }
    }

    /// The codebook as the run uses it: metric applied and, when the toggle
    /// is on, refined with the default rules.
    pub fn prepare_codebook(&self, cb: &Codebook) -> Result<Codebook, TrainerError> {
        let cb = cb.clone().with_metric(self.metric);
        if self.model == ModelKind::Dre && self.toggles.token_refinement {
            Ok(cb.refine(&RefineRules::default())?)
        } else {
            Ok(cb)
        }
    }

    /// Seed of the neighbor samples used for evaluation and encoding.
    pub fn eval_seed(&self) -> u64 {
        self.seed ^ 0x5EED_E7A1
    }

    /// Same configuration with `T = D = views`, fanouts truncated or
    /// extended with their last entry.
    pub fn with_views(&self, views: usize) -> Self {
        let mut c = self.clone();
        c.layers = views;
        c.views = views;
        let last = *self.fanouts.last().unwrap_or(&10);
        c.fanouts = (0..views).map(|i| *self.fanouts.get(i).unwrap_or(&last)).collect();
        c
    }
}
