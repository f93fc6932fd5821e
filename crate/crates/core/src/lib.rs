//! Translate graph nodes into sequences of tokens from a frozen vocabulary.
//!
//! A multi-view GraphSAGE encoder produces one embedding per layer for each
//! node; every layer's embedding is residually quantized into `K` codes drawn
//! from a frozen token codebook, and the pooled codes are fed back into the
//! next layer. Layer `t` corresponds to the `t`-hop view of the node, so a
//! node becomes `T × K` tokens ordered from local to global structure.
//!
//! The crate contains the pieces needed to train and inspect such an
//! encoder at desk scale:
//!
//! * [`graph`] loads datasets and samples neighborhoods and edge batches.
//! * [`autodiff`] is the small reverse-mode engine everything trains on.
//! * [`codebook`] holds the frozen vocabulary, refinement and perplexity.
//! * [`quantizer`] implements residual quantization and the commitment term.
//! * [`encoder`] is the quantized multi-view encoder and its checkpoints.
//! * [`heads`] are the classifier, reconstruction heads and losses;
//!   [`prompt`] renders encodings as natural-language prompts.
//! * [`trainer`] runs training, evaluation, view sweeps and ablations.
//! * [`synthetic`] generates datasets for tests and demos.

pub mod autodiff;
pub mod cli;
pub mod codebook;
pub mod encoder;
pub mod graph;
pub mod heads;
pub mod prompt;
pub mod quantizer;
pub mod synthetic;
pub mod trainer;

pub use codebook::{Codebook, CodeUsage, Metric};
pub use encoder::{ModelParams, NodeEncoding};
pub use graph::Graph;
pub use trainer::{MetricsLog, TrainConfig};
