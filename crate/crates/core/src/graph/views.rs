use std::collections::VecDeque;

use super::{Graph, GraphError};

/// The subgraph induced on every node within `hops` of a center.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct View {
    pub hops: usize,
    /// Sorted node ids; always contains the center.
    pub nodes: Vec<usize>,
    /// Induced undirected edges `(u, v)` with `u < v`, sorted.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewSet {
    pub center: usize,
    /// `views[d - 1]` is the `d`-hop view.
    pub views: Vec<View>,
}

/// Breadth-first distances from `v`, truncated at `max_hops`.
pub(crate) fn bfs_within(g: &Graph, v: usize, max_hops: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.num_nodes()];
    dist[v] = Some(0);
    let mut queue = VecDeque::from([v]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u].expect("queued nodes have a distance");
        if du == max_hops {
            continue;
        }
        for &w in g.neighbors(u) {
            if dist[w].is_none() {
                dist[w] = Some(du + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Builds `views` nested views around `v`: view `d` holds every node at
/// shortest-path distance at most `d` and all edges among them.
pub fn extract_views(g: &Graph, v: usize, views: usize) -> Result<ViewSet, GraphError> {
    g.check_node(v)?;
    if views == 0 {
        return Err(GraphError::ZeroViews);
    }
    let dist = bfs_within(g, v, views);
    let mut reached: Vec<(usize, usize)> = dist
        .iter()
        .enumerate()
        .filter_map(|(u, d)| d.map(|d| (d, u)))
        .collect();
    reached.sort_unstable();

    let mut out = Vec::with_capacity(views);
    for d in 1..=views {
        let mut nodes: Vec<usize> = reached
            .iter()
            .take_while(|(du, _)| *du <= d)
            .map(|&(_, u)| u)
            .collect();
        nodes.sort_unstable();
        let mut edges = Vec::new();
        for &u in &nodes {
            for &w in g.neighbors(u) {
                if w > u && dist[w].is_some_and(|dw| dw <= d) {
                    edges.push((u, w));
                }
            }
        }
        out.push(View { hops: d, nodes, edges });
    }
    Ok(ViewSet { center: v, views: out })
}
