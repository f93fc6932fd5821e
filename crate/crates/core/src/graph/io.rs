use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{Graph, GraphError, Splits};

/// Contents of `meta.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub num_nodes: usize,
    pub num_features: usize,
    pub num_classes: usize,
    pub label_names: Vec<String>,
}

fn read(path: &Path) -> Result<String, GraphError> {
    fs::read_to_string(path).map_err(|source| GraphError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_err(file: &str, line: usize, msg: impl Into<String>) -> GraphError {
    GraphError::Parse {
        file: file.to_string(),
        line,
        msg: msg.into(),
    }
}

/// Reads a dataset directory holding `nodes.tsv`, `edges.tsv`,
/// `splits.json` and `meta.json`.
///
/// Edges are symmetrized; self-loops and repeated edges are dropped and
/// reported through the `log` warning channel.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Graph, GraphError> {
    let dir = dir.as_ref();
    let meta_text = read(&dir.join("meta.json"))?;
    let meta: DatasetMeta = serde_json::from_str(&meta_text).map_err(|e| parse_err("meta.json", e.line(), e.to_string()))?;
    if meta.label_names.len() != meta.num_classes {
        return Err(GraphError::Mismatch {
            file: "meta.json".into(),
            msg: format!(
                "num_classes is {} but label_names has {} entries",
                meta.num_classes,
                meta.label_names.len()
            ),
        });
    }

    let nodes_text = read(&dir.join("nodes.tsv"))?;
    let n = meta.num_nodes;
    let f = meta.num_features;
    let mut features = vec![0.0; n * f];
    let mut labels = vec![0usize; n];
    let mut seen = vec![false; n];
    let mut rows = 0usize;
    for (i, line) in nodes_text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        rows += 1;
        let mut parts = line.splitn(3, '\t');
        let id_s = parts.next().unwrap_or("");
        let label_s = parts
            .next()
            .ok_or_else(|| parse_err("nodes.tsv", lineno, "missing label column"))?;
        let feat_s = parts.next().unwrap_or("");
        let id: usize = id_s
            .trim()
            .parse()
            .map_err(|_| parse_err("nodes.tsv", lineno, format!("bad node id {id_s:?}")))?;
        if id >= n {
            return Err(parse_err(
                "nodes.tsv",
                lineno,
                format!("node id {id} out of range for {n} nodes"),
            ));
        }
        if seen[id] {
            return Err(parse_err("nodes.tsv", lineno, format!("node id {id} repeated")));
        }
        seen[id] = true;
        let label: usize = label_s
            .trim()
            .parse()
            .map_err(|_| parse_err("nodes.tsv", lineno, format!("bad label {label_s:?}")))?;
        if label >= meta.num_classes {
            return Err(parse_err(
                "nodes.tsv",
                lineno,
                format!("label index {label} out of range for {} classes", meta.num_classes),
            ));
        }
        labels[id] = label;
        let row = &mut features[id * f..(id + 1) * f];
        let mut count = 0usize;
        if !feat_s.trim().is_empty() {
            for (j, tok) in feat_s.split(',').enumerate() {
                if j >= f {
                    return Err(parse_err(
                        "nodes.tsv",
                        lineno,
                        format!("more than {f} feature values"),
                    ));
                }
                let v: f64 = tok
                    .trim()
                    .parse()
                    .map_err(|_| parse_err("nodes.tsv", lineno, format!("bad feature value {tok:?}")))?;
                if !v.is_finite() {
                    return Err(parse_err("nodes.tsv", lineno, format!("non-finite feature {tok:?}")));
                }
                row[j] = v;
                count += 1;
            }
        }
        if count != f {
            return Err(parse_err(
                "nodes.tsv",
                lineno,
                format!("{count} feature values, expected {f}"),
            ));
        }
    }
    if rows != n {
        return Err(GraphError::Mismatch {
            file: "nodes.tsv".into(),
            msg: format!("{rows} rows but meta.json declares {n} nodes"),
        });
    }

    let edges_text = read(&dir.join("edges.tsv"))?;
    let mut edges = Vec::new();
    for (i, line) in edges_text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let mut endpoint = |what: &str| -> Result<usize, GraphError> {
            let s = parts
                .next()
                .ok_or_else(|| parse_err("edges.tsv", lineno, format!("missing {what}")))?;
            let v: usize = s
                .trim()
                .parse()
                .map_err(|_| parse_err("edges.tsv", lineno, format!("bad {what} {s:?}")))?;
            if v >= n {
                return Err(parse_err(
                    "edges.tsv",
                    lineno,
                    format!("{what} {v} out of range for {n} nodes"),
                ));
            }
            Ok(v)
        };
        let u = endpoint("src")?;
        let v = endpoint("dst")?;
        edges.push((u, v));
    }

    let splits_text = read(&dir.join("splits.json"))?;
    let splits: Splits =
        serde_json::from_str(&splits_text).map_err(|e| parse_err("splits.json", e.line(), e.to_string()))?;

    let (g, report) = Graph::new(n, edges, f, features, labels, meta.label_names, splits)?;
    if report.self_loops > 0 || report.duplicates > 0 {
        warn!(
            "{}: dropped {} self-loops and {} duplicate edges",
            dir.display(),
            report.self_loops,
            report.duplicates
        );
    }
    Ok(g)
}

/// Writes `g` in the directory layout read by [`load_dataset`]. Each
/// undirected edge is written once, smaller endpoint first.
pub fn write_dataset(g: &Graph, dir: impl AsRef<Path>) -> Result<(), GraphError> {
    let dir = dir.as_ref();
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| GraphError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;

    let meta = DatasetMeta {
        num_nodes: g.num_nodes(),
        num_features: g.num_features(),
        num_classes: g.num_classes(),
        label_names: g.label_names().to_vec(),
    };
    let p = dir.join("meta.json");
    fs::write(&p, serde_json::to_string_pretty(&meta).expect("serializable") + "\n").map_err(io(&p))?;

    let p = dir.join("nodes.tsv");
    let file = fs::File::create(&p).map_err(io(&p))?;
    let mut w = BufWriter::new(file);
    for v in 0..g.num_nodes() {
        let feats: Vec<String> = g.feature_row(v).iter().map(|x| format!("{x}")).collect();
        writeln!(w, "{v}\t{}\t{}", g.label(v), feats.join(",")).map_err(io(&p))?;
    }
    w.flush().map_err(io(&p))?;

    let p = dir.join("edges.tsv");
    let file = fs::File::create(&p).map_err(io(&p))?;
    let mut w = BufWriter::new(file);
    for (u, v) in g.edges() {
        writeln!(w, "{u}\t{v}").map_err(io(&p))?;
    }
    w.flush().map_err(io(&p))?;

    let p = dir.join("splits.json");
    fs::write(&p, serde_json::to_string(g.splits()).expect("serializable") + "\n").map_err(io(&p))?;
    Ok(())
}
