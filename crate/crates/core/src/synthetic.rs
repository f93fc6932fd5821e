//! Seeded graph generators for tests, examples and desk-scale experiments.
//!
//! [`SyntheticConfig::cora_like`] mimics the shape of the Cora citation
//! network: 2708 nodes in seven classes of Cora's sizes, 5429 undirected
//! edges with a heavy-tailed degree distribution and strong class
//! homophily, and sparse binary bag-of-words features.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Pareto;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

use crate::graph::{Graph, GraphError, Splits};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    /// Node count per class; the total is the node count.
    pub class_sizes: Vec<usize>,
    pub label_names: Vec<String>,
    /// Unique undirected edges; every node gets at least one.
    pub edges: usize,
    /// Probability that an edge joins two nodes of the same class.
    pub homophily: f64,
    /// Pareto shape of the per-node attachment propensity (smaller is
    /// heavier-tailed).
    pub degree_shape: f64,
    pub features: usize,
    /// Mean number of active words per node.
    pub words_per_node: usize,
    /// Words in each class's topical vocabulary.
    pub topic_words: usize,
    /// Probability that a word is drawn from the node's class topic rather
    /// than the shared background.
    pub signal: f64,
    /// Train and validation fractions; the remainder is the test split.
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self::cora_like(0)
    }
}

impl SyntheticConfig {
    pub fn cora_like(seed: u64) -> Self {
        SyntheticConfig {
            class_sizes: vec![818, 426, 418, 351, 298, 217, 180],
            label_names: [
                "Neural Networks",
                "Probabilistic Methods",
                "Genetic Algorithms",
                "Theory",
                "Case Based",
                "Reinforcement Learning",
                "Rule Learning",
            ]
            .map(String::from)
            .to_vec(),
            edges: 5429,
            homophily: 0.81,
            degree_shape: 1.6,
            features: 1433,
            words_per_node: 18,
            topic_words: 120,
            signal: 0.25,
            train_fraction: 0.6,
            val_fraction: 0.2,
            seed,
        }
    }

    /// A 300-node, three-class graph that trains in seconds.
    pub fn small(seed: u64) -> Self {
        SyntheticConfig {
            class_sizes: vec![120, 100, 80],
            label_names: ["Alpha", "Beta", "Gamma"].map(String::from).to_vec(),
            edges: 700,
            homophily: 0.8,
            degree_shape: 1.8,
            features: 96,
            words_per_node: 10,
            topic_words: 16,
            signal: 0.3,
            train_fraction: 0.6,
            val_fraction: 0.2,
            seed,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.class_sizes.iter().sum()
    }
}

fn invalid(msg: String) -> GraphError {
    GraphError::Invalid(msg)
}

/// Generates a graph from `cfg`.
pub fn generate(cfg: &SyntheticConfig) -> Result<Graph, GraphError> {
    let n = cfg.num_nodes();
    let classes = cfg.class_sizes.len();
    if classes == 0 || cfg.class_sizes.contains(&0) {
        return Err(invalid("every class needs at least one node".into()));
    }
    if cfg.label_names.len() != classes {
        return Err(invalid(format!("{} label names for {classes} classes", cfg.label_names.len())));
    }
    if cfg.edges < n / 2 || cfg.edges > n * (n - 1) / 4 {
        return Err(invalid(format!("{} edges is outside the supported range for {n} nodes", cfg.edges)));
    }
    if cfg.topic_words == 0 || cfg.topic_words > cfg.features || cfg.words_per_node == 0 || cfg.words_per_node > cfg.features / 2 {
        return Err(invalid("word counts do not fit the feature dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut labels: Vec<usize> = cfg
        .class_sizes
        .iter()
        .enumerate()
        .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
        .collect();
    labels.shuffle(&mut rng);

    let pareto = Pareto::new(1.0, cfg.degree_shape).map_err(|e| invalid(e.to_string()))?;
    let propensity: Vec<f64> = (0..n).map(|_| pareto.sample(&mut rng).min(200.0)).collect();
    let members: Vec<Vec<usize>> = (0..classes)
        .map(|c| (0..n).filter(|&v| labels[v] == c).collect())
        .collect();
    let pickers: Vec<WeightedIndex<f64>> = members
        .iter()
        .map(|m| WeightedIndex::new(m.iter().map(|&v| propensity[v])).expect("positive weights"))
        .collect();
    let global = WeightedIndex::new(&propensity).expect("positive weights");
    let class_mass: Vec<f64> = members.iter().map(|m| m.iter().map(|&v| propensity[v]).sum()).collect();

    let partner = |u: usize, rng: &mut ChaCha8Rng| -> usize {
        let own = labels[u];
        let c = if classes == 1 || rng.random::<f64>() < cfg.homophily {
            own
        } else {
            let w: Vec<f64> = (0..classes).map(|c| if c == own { 0.0 } else { class_mass[c] }).collect();
            WeightedIndex::new(&w).expect("another class exists").sample(rng)
        };
        members[c][pickers[c].sample(rng)]
    };

    let mut edges: HashSet<(usize, usize)> = HashSet::with_capacity(cfg.edges);
    let mut degree = vec![0usize; n];
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut list = Vec::with_capacity(cfg.edges);
    let mut add = |u: usize, v: usize, edges: &mut HashSet<(usize, usize)>, degree: &mut [usize]| -> bool {
        if u == v || !edges.insert((u.min(v), u.max(v))) {
            return false;
        }
        degree[u] += 1;
        degree[v] += 1;
        list.push((u.min(v), u.max(v)));
        true
    };
    for &u in &order {
        if degree[u] > 0 {
            continue;
        }
        for _ in 0..1000 {
            let v = partner(u, &mut rng);
            if add(u, v, &mut edges, &mut degree) {
                break;
            }
        }
    }
    let mut attempts = 0usize;
    while edges.len() < cfg.edges {
        attempts += 1;
        if attempts > 1000 * cfg.edges {
            return Err(invalid("could not place the requested number of edges".into()));
        }
        let u = global.sample(&mut rng);
        let v = partner(u, &mut rng);
        add(u, v, &mut edges, &mut degree);
    }
    if edges.len() > cfg.edges {
        return Err(invalid(format!(
            "{} edges needed to connect every node, more than the requested {}",
            edges.len(),
            cfg.edges
        )));
    }

    // Topical vocabularies and a Zipf-like background.
    let all_words: Vec<usize> = (0..cfg.features).collect();
    let topics: Vec<Vec<usize>> = (0..classes)
        .map(|_| all_words.choose_multiple(&mut rng, cfg.topic_words).copied().collect())
        .collect();
    let mut ranked = all_words.clone();
    ranked.shuffle(&mut rng);
    let background = WeightedIndex::new((0..cfg.features).map(|r| 1.0 / (r as f64 + 10.0))).expect("positive");

    let f = cfg.features;
    let mut features = vec![0.0; n * f];
    let lo = cfg.words_per_node.div_ceil(2);
    let hi = cfg.words_per_node + cfg.words_per_node / 2;
    for v in 0..n {
        let count = rng.random_range(lo..=hi);
        let row = &mut features[v * f..(v + 1) * f];
        let mut placed = 0;
        while placed < count {
            let w = if rng.random::<f64>() < cfg.signal {
                topics[labels[v]][rng.random_range(0..cfg.topic_words)]
            } else {
                ranked[background.sample(&mut rng)]
            };
            if row[w] == 0.0 {
                row[w] = 1.0;
                placed += 1;
            }
        }
    }

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    let n_train = (cfg.train_fraction * n as f64).round() as usize;
    let n_val = (cfg.val_fraction * n as f64).round() as usize;
    let sorted = |s: &[usize]| {
        let mut v = s.to_vec();
        v.sort_unstable();
        v
    };
    let splits = Splits {
        train: sorted(&perm[..n_train]),
        val: sorted(&perm[n_train..n_train + n_val]),
        test: sorted(&perm[n_train + n_val..]),
    };
    Ok(Graph::new(n, list, f, features, labels, cfg.label_names.clone(), splits)?.0)
}

/// Two triangles joined by one edge, one class per triangle, with distinct
/// four-dimensional features.
pub fn toy_two_class() -> Graph {
    let edges = [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5)];
    #[rustfmt::skip]
    let features = vec![
        1.0, 0.0, 0.2, 0.0,
        0.9, 0.1, 0.0, 0.3,
        0.6, 0.4, 0.1, 0.0,
        0.4, 0.6, 0.0, 0.1,
        0.1, 0.9, 0.3, 0.0,
        0.0, 1.0, 0.0, 0.2,
    ];
    let splits = Splits {
        train: vec![0, 1, 3, 4],
        val: vec![2],
        test: vec![5],
    };
    Graph::new(6, edges, 4, features, vec![0, 0, 0, 1, 1, 1], vec!["Left".into(), "Right".into()], splits)
        .expect("valid toy graph")
        .0
}
