use rayon::prelude::*;
use serde::Serialize;

use super::train::{evaluate, train};
use super::{TrainConfig, Toggles, TrainerError};
use crate::codebook::Codebook;
use crate::graph::Graph;

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

struct SeedRun {
    val: f64,
    test: f64,
    perplexity: Vec<f64>,
}

/// One trained run per seed, in seed order.
fn run_seeds(g: &Graph, cfg: &TrainConfig, cb: &Codebook, seeds: &[u64]) -> Result<Vec<SeedRun>, TrainerError> {
    seeds
        .par_iter()
        .map(|&seed| {
            let c = TrainConfig { seed, ..cfg.clone() };
            let out = train(g, &c, cb)?;
            let val = evaluate(&out.params, g, "val", &c, &out.codebook)?;
            let test = evaluate(&out.params, g, "test", &c, &out.codebook)?;
            let perplexity = out.log.last().map(|r| r.perplexity.clone()).unwrap_or_default();
            Ok(SeedRun { val, test, perplexity })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub views: usize,
    pub val: Vec<f64>,
    pub test: Vec<f64>,
    pub val_mean: f64,
    pub val_std: f64,
    pub test_mean: f64,
    pub test_std: f64,
    /// `val_mean` divided by the reference entry's `val_mean`.
    pub normalized: f64,
    /// Final-epoch code perplexity per seed and layer; empty rows without
    /// quantization.
    pub perplexity: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    /// View count the scores are normalized against: 3 when swept,
    /// otherwise the first count.
    pub reference_views: usize,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn row(&self, views: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.views == views)
    }
}

/// Trains one model per (view count, seed) with `T = D = count`.
pub fn sweep_views(g: &Graph, cfg: &TrainConfig, cb: &Codebook, view_counts: &[usize], seeds: &[u64]) -> Result<SweepReport, TrainerError> {
    if view_counts.is_empty() || view_counts.contains(&0) {
        return Err(TrainerError::Config("view counts must be non-empty and at least 1".into()));
    }
    if seeds.is_empty() {
        return Err(TrainerError::Config("at least one seed is required".into()));
    }
    let mut rows = Vec::with_capacity(view_counts.len());
    for &views in view_counts {
        let runs = run_seeds(g, &cfg.with_views(views), cb, seeds)?;
        let val: Vec<f64> = runs.iter().map(|r| r.val).collect();
        let test: Vec<f64> = runs.iter().map(|r| r.test).collect();
        let (val_mean, val_std) = mean_std(&val);
        let (test_mean, test_std) = mean_std(&test);
        log::info!("views {views}: val {val_mean:.4} ± {val_std:.4}, test {test_mean:.4} ± {test_std:.4}");
        rows.push(SweepRow {
            views,
            val,
            test,
            val_mean,
            val_std,
            test_mean,
            test_std,
            normalized: f64::NAN,
            perplexity: runs.into_iter().map(|r| r.perplexity).collect(),
        });
    }
    let reference_views = if view_counts.contains(&3) { 3 } else { view_counts[0] };
    let reference = rows.iter().find(|r| r.views == reference_views).expect("present").val_mean;
    for r in &mut rows {
        r.normalized = r.val_mean / reference;
    }
    Ok(SweepReport { reference_views, rows })
}

/// The cumulative ladder: everything off, then multi-view, quantization
/// (one code, no re-injection), intra-layer residue, inter-layer residue and
/// token refinement switched on in turn.
pub fn ablation_ladder() -> Vec<Toggles> {
    let mut t = Toggles::none();
    let mut out = vec![t];
    for step in 0..5 {
        match step {
            0 => t.multi_view = true,
            1 => t.quantization = true,
            2 => t.intra_residual = true,
            3 => t.inter_residual = true,
            _ => t.token_refinement = true,
        }
        out.push(t);
    }
    out
}

/// All 32 toggle combinations, in binary order with multi-view as the
/// lowest bit.
pub fn full_toggle_matrix() -> Vec<Toggles> {
    (0..32u32)
        .map(|m| Toggles {
            multi_view: m & 1 != 0,
            quantization: m & 2 != 0,
            intra_residual: m & 4 != 0,
            inter_residual: m & 8 != 0,
            token_refinement: m & 16 != 0,
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub label: String,
    pub toggles: Toggles,
    pub val_mean: f64,
    pub test: Vec<f64>,
    pub test_mean: f64,
    pub test_std: f64,
}

/// Trains and scores every toggle configuration over `seeds`.
pub fn ablate(g: &Graph, cfg: &TrainConfig, cb: &Codebook, configs: &[Toggles], seeds: &[u64]) -> Result<Vec<AblationRow>, TrainerError> {
    if seeds.is_empty() {
        return Err(TrainerError::Config("at least one seed is required".into()));
    }
    configs
        .iter()
        .map(|&toggles| {
            let c = TrainConfig {
                model: super::ModelKind::Dre,
                toggles,
                ..cfg.clone()
            };
            let runs = run_seeds(g, &c, cb, seeds)?;
            let val: Vec<f64> = runs.iter().map(|r| r.val).collect();
            let test: Vec<f64> = runs.iter().map(|r| r.test).collect();
            let (test_mean, test_std) = mean_std(&test);
            let row = AblationRow {
                label: toggles.label(),
                toggles,
                val_mean: mean_std(&val).0,
                test,
                test_mean,
                test_std,
            };
            log::info!("{}: test {:.4} ± {:.4}", row.label, row.test_mean, row.test_std);
            Ok(row)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::toy_two_class;

    fn tiny() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 4,
            layers: 3,
            views: 3,
            codes_per_view: 2,
            dim: 8,
            fanouts: vec![2, 2, 2],
            edge_batch: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn single_count_normalizes_to_one() {
        let g = toy_two_class();
        let cb = Codebook::synthetic_mixed(16, 8, 1);
        let r = sweep_views(&g, &tiny(), &cb, &[3], &[0]).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.reference_views, 3);
        assert_eq!(r.rows[0].normalized, 1.0);
        let r = sweep_views(&g, &tiny(), &cb, &[2, 1], &[0, 1]).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.reference_views, 2);
        assert_eq!(r.rows[1].val.len(), 2);
        assert!(sweep_views(&g, &tiny(), &cb, &[0], &[0]).is_err());
    }

    #[test]
    fn ladder_is_cumulative() {
        let l = ablation_ladder();
        assert_eq!(l.len(), 6);
        assert_eq!(l[0], Toggles::none());
        assert_eq!(l[5], Toggles::default());
        let on = |t: &Toggles| [t.multi_view, t.quantization, t.intra_residual, t.inter_residual, t.token_refinement].iter().filter(|b| **b).count();
        for (i, t) in l.iter().enumerate() {
            assert_eq!(on(t), i);
        }
        let m = full_toggle_matrix();
        assert_eq!(m.len(), 32);
        let distinct: std::collections::HashSet<String> = m.iter().map(|t| format!("{t:?}")).collect();
        assert_eq!(distinct.len(), 32);
    }

    #[test]
    fn ablation_emits_one_row_per_config() {
        let g = toy_two_class();
        let cb = Codebook::synthetic_mixed(16, 8, 1);
        let rows = ablate(&g, &tiny(), &cb, &ablation_ladder(), &[3]).unwrap();
        assert_eq!(rows.len(), 6);
        for r in &rows {
            assert!((0.0..=1.0).contains(&r.test_mean));
        }
        assert_eq!(rows[0].label, "plain");
    }
}
