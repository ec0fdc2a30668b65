//! Undirected attributed graphs, unlearning requests and neighborhood queries.

mod io;
mod request;

use std::collections::{BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{AguError, Result};
use crate::numeric::{SparseMatrix, Tensor};

pub use io::{
    format_graph, format_masks, format_request, load_graph, load_masks, load_request, read_graph,
    read_masks, read_request, write_graph, write_masks, write_request,
};
pub use request::{GraphDelta, RequestKind, UnlearnRequest};

pub type NodeSet = BTreeSet<usize>;

/// Undirected edge with `lo < hi`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    lo: usize,
    hi: usize,
}

impl Edge {
    /// Orders the endpoints; rejects self-loops.
    pub fn new(a: usize, b: usize) -> Result<Edge> {
        if a == b {
            return Err(AguError::Reference(format!("self-loop ({a},{a})")));
        }
        Ok(Edge {
            lo: a.min(b),
            hi: a.max(b),
        })
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.hi
    }

    pub fn endpoints(&self) -> (usize, usize) {
        (self.lo, self.hi)
    }

    pub fn touches(&self, v: usize) -> bool {
        self.lo == v || self.hi == v
    }
}

/// Node features, labels, symmetric CSR adjacency and train/test masks.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    train_mask: Vec<bool>,
    test_mask: Vec<bool>,
}

impl Graph {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        edges: &[Edge],
        train_mask: Vec<bool>,
        test_mask: Vec<bool>,
    ) -> Result<Graph> {
        let n = features.rows();
        if labels.len() != n || train_mask.len() != n || test_mask.len() != n {
            return Err(AguError::dim(
                "graph",
                format!(
                    "{n} feature rows, {} labels, {} train flags, {} test flags",
                    labels.len(),
                    train_mask.len(),
                    test_mask.len()
                ),
            ));
        }
        if let Some((v, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(AguError::Reference(format!(
                "node {v} has label {l} but there are {num_classes} classes"
            )));
        }
        if let Some(v) = (0..n).find(|&v| train_mask[v] && test_mask[v]) {
            return Err(AguError::Contract(format!("node {v} is in both train and test masks")));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in edges {
            if e.hi >= n {
                return Err(AguError::Reference(format!(
                    "edge ({},{}) references a node outside 0..{n}",
                    e.lo, e.hi
                )));
            }
            adj[e.lo].push(e.hi);
            adj[e.hi].push(e.lo);
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(2 * edges.len());
        offsets.push(0);
        for (v, list) in adj.iter_mut().enumerate() {
            list.sort_unstable();
            if let Some(w) = list.windows(2).find(|w| w[0] == w[1]) {
                return Err(AguError::Reference(format!("duplicate edge ({v},{})", w[0])));
            }
            neighbors.extend_from_slice(list);
            offsets.push(neighbors.len());
        }
        Ok(Graph {
            features,
            labels,
            num_classes,
            offsets,
            neighbors,
            train_mask,
            test_mask,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn train_mask(&self) -> &[bool] {
        &self.train_mask
    }

    pub fn test_mask(&self) -> &[bool] {
        &self.test_mask
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&v| self.train_mask[v]).collect()
    }

    pub fn test_nodes(&self) -> Vec<usize> {
        (0..self.num_nodes()).filter(|&v| self.test_mask[v]).collect()
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.num_nodes() && self.neighbors(a).binary_search(&b).is_ok()
    }

    /// Every undirected edge once, in lexicographic order.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes() {
            for &v in self.neighbors(u) {
                if u < v {
                    out.push(Edge { lo: u, hi: v });
                }
            }
        }
        out
    }

    /// Same nodes, features and masks with a different edge set.
    pub fn with_edges(&self, edges: &[Edge]) -> Result<Graph> {
        Graph::new(
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
            edges,
            self.train_mask.clone(),
            self.test_mask.clone(),
        )
    }

    /// The graph with every edge removed.
    pub fn edgeless(&self) -> Graph {
        let n = self.num_nodes();
        Graph {
            offsets: vec![0; n + 1],
            neighbors: Vec::new(),
            ..self.clone()
        }
    }

    pub fn with_features(&self, features: Tensor) -> Result<Graph> {
        self.features.same_shape(&features, "with_features")?;
        Ok(Graph {
            features,
            ..self.clone()
        })
    }

    pub fn with_masks(&self, train_mask: Vec<bool>, test_mask: Vec<bool>) -> Result<Graph> {
        Graph::new(
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
            &self.edges(),
            train_mask,
            test_mask,
        )
    }

    /// Relabels node `v` as `perm[v]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(AguError::Contract("not a permutation".into()));
        }
        let mut features = Tensor::zeros(n, self.num_features());
        let mut labels = vec![0; n];
        let mut train = vec![false; n];
        let mut test = vec![false; n];
        for v in 0..n {
            features.row_mut(perm[v]).copy_from_slice(self.features.row(v));
            labels[perm[v]] = self.labels[v];
            train[perm[v]] = self.train_mask[v];
            test[perm[v]] = self.test_mask[v];
        }
        let edges: Vec<Edge> = self
            .edges()
            .iter()
            .map(|e| Edge::new(perm[e.lo], perm[e.hi]))
            .collect::<Result<_>>()?;
        Graph::new(features, labels, self.num_classes, &edges, train, test)
    }
}

/// Node degrees (self-loops never stored).
pub fn degrees(g: &Graph) -> Vec<usize> {
    (0..g.num_nodes()).map(|v| g.degree(v)).collect()
}

/// BFS distance from the nearest source, `None` when unreachable.
pub fn hop_distances(g: &Graph, sources: impl IntoIterator<Item = usize>) -> Vec<Option<usize>> {
    let mut dist = vec![None; g.num_nodes()];
    let mut queue = VecDeque::new();
    for s in sources {
        if dist[s].is_none() {
            dist[s] = Some(0);
            queue.push_back(s);
        }
    }
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap();
        for &w in g.neighbors(u) {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Nodes at distance `1..=k` from `v`.
pub fn k_hop_set(g: &Graph, v: usize, k: usize) -> NodeSet {
    let mut dist = vec![usize::MAX; g.num_nodes()];
    let mut queue = VecDeque::from([v]);
    dist[v] = 0;
    let mut out = NodeSet::new();
    while let Some(u) = queue.pop_front() {
        if dist[u] == k {
            continue;
        }
        for &w in g.neighbors(u) {
            if dist[w] == usize::MAX {
                dist[w] = dist[u] + 1;
                out.insert(w);
                queue.push_back(w);
            }
        }
    }
    out
}

/// Both endpoints have empty k-hop balls (apart from each other), so there
/// is nothing comparable to sample from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IsolatedPair;

/// Common k-hop neighbors of `u` and `v`, falling back to the union when
/// fewer than two are shared. Never contains `u` or `v`.
pub fn candidate_pairs(g: &Graph, u: usize, v: usize, k: usize) -> std::result::Result<NodeSet, IsolatedPair> {
    debug_assert_ne!(u, v);
    let mut bu = k_hop_set(g, u, k);
    let mut bv = k_hop_set(g, v, k);
    bu.remove(&v);
    bv.remove(&u);
    let common: NodeSet = bu.intersection(&bv).copied().collect();
    if common.len() >= 2 {
        return Ok(common);
    }
    let union: NodeSet = bu.union(&bv).copied().collect();
    if union.is_empty() {
        Err(IsolatedPair)
    } else {
        Ok(union)
    }
}

/// `D^{-1/2} (A [+ I]) D^{-1/2}`; zero-degree rows stay empty.
pub fn normalized_adjacency(g: &Graph, self_loops: bool) -> SparseMatrix {
    let n = g.num_nodes();
    let extra = usize::from(self_loops);
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| {
            let d = g.degree(v) + extra;
            if d == 0 {
                0.0
            } else {
                1.0 / (d as f64).sqrt()
            }
        })
        .collect();
    build_csr(g, self_loops, |i, j| inv_sqrt[i] * inv_sqrt[j])
}

/// Row-normalized adjacency without self-loops (neighbor mean).
pub fn mean_adjacency(g: &Graph) -> SparseMatrix {
    build_csr(g, false, |i, _| 1.0 / g.degree(i) as f64)
}

/// Unweighted adjacency, optionally with self-loops.
pub fn sum_adjacency(g: &Graph, self_loops: bool) -> SparseMatrix {
    build_csr(g, self_loops, |_, _| 1.0)
}

fn build_csr(g: &Graph, self_loops: bool, weight: impl Fn(usize, usize) -> f64) -> SparseMatrix {
    let n = g.num_nodes();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(g.neighbors.len() + n);
    let mut vals = Vec::with_capacity(g.neighbors.len() + n);
    offsets.push(0);
    for i in 0..n {
        let mut pushed_self = !self_loops;
        for &j in g.neighbors(i) {
            if !pushed_self && j > i {
                cols.push(i);
                vals.push(weight(i, i));
                pushed_self = true;
            }
            cols.push(j);
            vals.push(weight(i, j));
        }
        if !pushed_self {
            cols.push(i);
            vals.push(weight(i, i));
        }
        offsets.push(cols.len());
    }
    SparseMatrix::from_csr(n, n, offsets, cols, vals).expect("adjacency is valid CSR by construction")
}
