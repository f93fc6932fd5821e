use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::TrainerError;
use crate::heads::LossBreakdown;

/// One epoch of a training run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's batches.
    pub loss: LossBreakdown,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
    /// Per-layer code perplexity over the epoch; empty without quantization.
    pub perplexity: Vec<f64>,
    pub wall_seconds: f64,
}

impl PartialEq for EpochRecord {
    /// Wall time is excluded.
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch
            && self.loss == other.loss
            && self.train_accuracy == other.train_accuracy
            && self.val_accuracy == other.val_accuracy
            && self.perplexity == other.perplexity
    }
}

/// Append-only list of epoch records.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    records: Vec<EpochRecord>,
}

impl MetricsLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: EpochRecord) {
        debug_assert_eq!(record.epoch, self.records.len());
        self.records.push(record);
    }

    pub fn records(&self) -> &[EpochRecord] {
        &self.records
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<(), TrainerError> {
        let path = path.as_ref();
        let io = |source| TrainerError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        for r in &self.records {
            let line = serde_json::to_string(r).map_err(|source| TrainerError::Json {
                path: path.to_path_buf(),
                source,
            })?;
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Self, TrainerError> {
        let path = path.as_ref();
        let io = |source| TrainerError::Io {
            path: path.to_path_buf(),
            source,
        };
        let r = BufReader::new(File::open(path).map_err(io)?);
        let mut log = MetricsLog::new();
        for line in r.lines() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: EpochRecord = serde_json::from_str(&line).map_err(|source| TrainerError::Json {
                path: path.to_path_buf(),
                source,
            })?;
            if rec.epoch != log.len() {
                return Err(TrainerError::Config(format!(
                    "{}: expected epoch {}, found {}",
                    path.display(),
                    log.len(),
                    rec.epoch
                )));
            }
            log.records.push(rec);
        }
        Ok(log)
    }

    /// CSV with one row per epoch: losses, accuracies and one
    /// `perplexity_l<t>` column per layer.
    pub fn plot_csv(&self) -> String {
        let layers = self.records.iter().map(|r| r.perplexity.len()).max().unwrap_or(0);
        let mut out = String::from("epoch,total_loss,label_ce,feature_mse,adjacency_wbce,commitment,train_accuracy,val_accuracy");
        for t in 1..=layers {
            out.push_str(&format!(",perplexity_l{t}"));
        }
        out.push('\n');
        for r in &self.records {
            let l = &r.loss;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}",
                r.epoch,
                l.total,
                l.label_ce,
                l.feature_mse,
                l.adjacency_wbce,
                l.commitment,
                r.train_accuracy,
                r.val_accuracy.map(|v| v.to_string()).unwrap_or_default()
            ));
            for t in 0..layers {
                out.push(',');
                if let Some(p) = r.perplexity.get(t) {
                    out.push_str(&p.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}
