//! Immutable attributed graphs: loading, validation, hop-bounded views and
//! seeded sampling of neighborhoods and edge batches.

mod io;
mod sampling;
mod views;

pub use io::{load_dataset, write_dataset, DatasetMeta};
pub use sampling::{
    sample_blocks, sample_edges, sample_neighbors, Block, Blocks, EdgeBatch, NeighborSample,
};
pub use views::{extract_views, View, ViewSet};

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("{file}: {msg}")]
    Mismatch { file: String, msg: String },
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("node {node} out of range for graph with {num_nodes} nodes")]
    InvalidNode { node: usize, num_nodes: usize },
    #[error("view count must be at least 1")]
    ZeroViews,
    #[error("requested {requested} positive edges but the graph has {available}")]
    TooManyPositives { requested: usize, available: usize },
    #[error("graph has {available} non-edges, cannot sample {requested} negatives")]
    NoNegatives { requested: usize, available: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn get(&self, name: &str) -> Option<&[usize]> {
        match name {
            "train" => Some(&self.train),
            "val" => Some(&self.val),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

/// Counts of entries discarded while normalizing an edge list.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct NormalizeReport {
    pub self_loops: usize,
    pub duplicates: usize,
}

/// Undirected graph with node features, labels and splits.
///
/// Adjacency is stored in compressed rows; each undirected edge appears in
/// both endpoint lists, every list is sorted, and there are no self-loops or
/// repeated neighbors.
#[derive(Clone, Debug)]
pub struct Graph {
    num_nodes: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    num_features: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
    label_names: Vec<String>,
    splits: Splits,
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct GraphStats {
    pub nodes: usize,
    pub edges: usize,
    pub features: usize,
    pub classes: usize,
    /// `2|E| / (n(n−1))` in units of 10⁻⁴ (‱): the fraction of ordered node
    /// pairs joined by an edge.
    pub sparsity_permyriad: f64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl Graph {
    /// Builds a graph from a raw (possibly directed, possibly repetitive)
    /// edge list. Edges are symmetrized; self-loops and repeats are dropped
    /// and counted in the returned report.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        num_features: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
        label_names: Vec<String>,
        splits: Splits,
    ) -> Result<(Self, NormalizeReport), GraphError> {
        if features.len() != num_nodes * num_features {
            return Err(GraphError::Invalid(format!(
                "feature matrix has {} values, expected {num_nodes} x {num_features}",
                features.len()
            )));
        }
        if labels.len() != num_nodes {
            return Err(GraphError::Invalid(format!(
                "{} labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        if let Some((v, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= label_names.len()) {
            return Err(GraphError::Invalid(format!(
                "node {v} has label {l} but there are {} classes",
                label_names.len()
            )));
        }
        let mut seen = vec![false; num_nodes];
        for (name, ids) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
            for &v in ids {
                if v >= num_nodes {
                    return Err(GraphError::Invalid(format!("{name} split contains node {v} out of range")));
                }
                if seen[v] {
                    return Err(GraphError::Invalid(format!("node {v} appears in more than one split slot ({name})")));
                }
                seen[v] = true;
            }
        }

        let mut report = NormalizeReport::default();
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        let mut raw = 0usize;
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(GraphError::InvalidNode {
                    node: u.max(v),
                    num_nodes,
                });
            }
            if u == v {
                report.self_loops += 1;
                continue;
            }
            raw += 1;
            pairs.push((u.min(v), u.max(v)));
        }
        pairs.sort_unstable();
        pairs.dedup();
        report.duplicates = raw - pairs.len();

        let mut degree = vec![0usize; num_nodes];
        for &(u, v) in &pairs {
            degree[u] += 1;
            degree[v] += 1;
        }
        let mut offsets = Vec::with_capacity(num_nodes + 1);
        offsets.push(0);
        for d in &degree {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..num_nodes].to_vec();
        let mut targets = vec![0usize; offsets[num_nodes]];
        for &(u, v) in &pairs {
            targets[fill[u]] = v;
            fill[u] += 1;
            targets[fill[v]] = u;
            fill[v] += 1;
        }
        for v in 0..num_nodes {
            targets[offsets[v]..offsets[v + 1]].sort_unstable();
        }

        Ok((
            Self {
                num_nodes,
                offsets,
                targets,
                num_features,
                features,
                labels,
                label_names,
                splits,
            },
            report,
        ))
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Number of unique undirected edges.
    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.num_nodes && v < self.num_nodes && self.neighbors(u).binary_search(&v).is_ok()
    }

    /// Undirected edges as `(u, v)` with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_nodes).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| v > u)
                .map(move |&v| (u, v))
        })
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature_row(&self, v: usize) -> &[f64] {
        &self.features[v * self.num_features..(v + 1) * self.num_features]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn splits(&self) -> &Splits {
        &self.splits
    }

    pub fn check_node(&self, v: usize) -> Result<(), GraphError> {
        if v < self.num_nodes {
            Ok(())
        } else {
            Err(GraphError::InvalidNode {
                node: v,
                num_nodes: self.num_nodes,
            })
        }
    }

    /// Table-style summary. The sparsity figure is the ordered-pair edge
    /// fraction in ‱, which is how citation benchmarks conventionally
    /// report it (Cora: 14.8120).
    pub fn stats(&self) -> GraphStats {
        let n = self.num_nodes as f64;
        let sparsity = if self.num_nodes < 2 {
            0.0
        } else {
            2.0 * self.num_edges() as f64 / (n * (n - 1.0)) * 1e4
        };
        GraphStats {
            nodes: self.num_nodes,
            edges: self.num_edges(),
            features: self.num_features,
            classes: self.num_classes(),
            sparsity_permyriad: sparsity,
            train: self.splits.train.len(),
            val: self.splits.val.len(),
            test: self.splits.test.len(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn bare(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::new(
            n,
            edges.iter().copied(),
            0,
            vec![],
            vec![0; n],
            vec!["a".into()],
            Splits::default(),
        )
        .unwrap()
        .0
    }

    #[test]
    fn symmetrizes_and_dedups() {
        let (g, rep) = Graph::new(
            2,
            [(0, 1), (1, 0)],
            0,
            vec![],
            vec![0, 0],
            vec!["x".into()],
            Splits::default(),
        )
        .unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.neighbors(0), &[1]);
        assert_eq!(g.neighbors(1), &[0]);
        assert_eq!(rep.duplicates, 1);
    }

    #[test]
    fn drops_self_loops() {
        let (g, rep) = Graph::new(
            3,
            [(0, 0), (0, 1), (2, 2), (1, 2)],
            0,
            vec![],
            vec![0; 3],
            vec!["x".into()],
            Splits::default(),
        )
        .unwrap();
        assert_eq!(rep.self_loops, 2);
        assert_eq!(g.num_edges(), 2);
        assert!(g.edges().all(|(u, v)| u != v));
    }

    #[test]
    fn rejects_overlapping_splits() {
        let splits = Splits {
            train: vec![0, 1],
            val: vec![1],
            test: vec![],
        };
        let r = Graph::new(2, [], 0, vec![], vec![0, 0], vec!["x".into()], splits);
        assert!(matches!(r, Err(GraphError::Invalid(_))));
    }

    #[test]
    fn rejects_out_of_range_endpoint() {
        let r = Graph::new(2, [(0, 5)], 0, vec![], vec![0, 0], vec!["x".into()], Splits::default());
        assert!(matches!(r, Err(GraphError::InvalidNode { node: 5, .. })));
    }

    #[test]
    fn sparsity_of_cora_shape() {
        // 2708 nodes and 5429 edges give 14.8120 per ten thousand.
        let n = 2708.0f64;
        let s = 2.0 * 5429.0 / (n * (n - 1.0)) * 1e4;
        assert_eq!(format!("{s:.4}"), "14.8120");
    }

    #[test]
    fn has_edge_is_symmetric() {
        let g = bare(4, &[(0, 1), (2, 1), (3, 0)]);
        for (u, v) in [(0, 1), (1, 2), (0, 3)] {
            assert!(g.has_edge(u, v) && g.has_edge(v, u));
        }
        assert!(!g.has_edge(0, 2));
        assert_eq!(g.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 3), (1, 2)]);
    }
}
