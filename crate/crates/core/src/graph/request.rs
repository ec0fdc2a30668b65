use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{Edge, Graph, NodeSet};
use crate::error::{AguError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Node,
    Edge,
    Feature,
}

impl fmt::Display for RequestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RequestKind::Node => "node",
            RequestKind::Edge => "edge",
            RequestKind::Feature => "feature",
        })
    }
}

impl std::str::FromStr for RequestKind {
    type Err = AguError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "node" => Ok(RequestKind::Node),
            "edge" => Ok(RequestKind::Edge),
            "feature" => Ok(RequestKind::Feature),
            other => Err(AguError::Config(format!(
                "unknown request kind {other:?} (expected node, edge or feature)"
            ))),
        }
    }
}

/// Elements to remove from a trained model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "elements", rename_all = "lowercase")]
pub enum UnlearnRequest {
    Node(NodeSet),
    Edge(BTreeSet<Edge>),
    /// Whole feature rows to replace with zeros.
    Feature(NodeSet),
}

impl UnlearnRequest {
    pub fn kind(&self) -> RequestKind {
        match self {
            UnlearnRequest::Node(_) => RequestKind::Node,
            UnlearnRequest::Edge(_) => RequestKind::Edge,
            UnlearnRequest::Feature(_) => RequestKind::Feature,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            UnlearnRequest::Node(s) | UnlearnRequest::Feature(s) => s.len(),
            UnlearnRequest::Edge(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Checks that every referenced node and edge exists in `g`.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        if self.is_empty() {
            return Err(AguError::Contract(format!("empty {} request", self.kind())));
        }
        match self {
            UnlearnRequest::Node(s) | UnlearnRequest::Feature(s) => {
                if let Some(&v) = s.iter().find(|&&v| v >= g.num_nodes()) {
                    return Err(AguError::Reference(format!(
                        "node {v} not in graph of {} nodes",
                        g.num_nodes()
                    )));
                }
            }
            UnlearnRequest::Edge(s) => {
                if let Some(e) = s.iter().find(|e| !g.has_edge(e.lo(), e.hi())) {
                    return Err(AguError::Reference(format!(
                        "edge ({},{}) not in graph",
                        e.lo(),
                        e.hi()
                    )));
                }
            }
        }
        Ok(())
    }

    /// Nodes the request is anchored at: deleted nodes, edge endpoints, or
    /// feature-masked nodes. Hop distances are measured from these.
    pub fn anchor_nodes(&self) -> NodeSet {
        match self {
            UnlearnRequest::Node(s) | UnlearnRequest::Feature(s) => s.clone(),
            UnlearnRequest::Edge(s) => s.iter().flat_map(|e| [e.lo(), e.hi()]).collect(),
        }
    }

    /// Nodes that are themselves unlearning elements and therefore never
    /// count as affected neighbors. Edge endpoints stay in the remaining
    /// graph and are eligible.
    pub fn element_nodes(&self) -> NodeSet {
        match self {
            UnlearnRequest::Node(s) | UnlearnRequest::Feature(s) => s.clone(),
            UnlearnRequest::Edge(_) => NodeSet::new(),
        }
    }

    /// Builds the remaining graph.
    pub fn apply(&self, g: &Graph) -> Result<GraphDelta> {
        self.validate(g)?;
        Ok(strip(g, self))
    }
}

/// The remaining graph together with what was taken out of it.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphDelta {
    pub remaining: Graph,
    pub removed_edges: BTreeSet<Edge>,
    pub removed_nodes: NodeSet,
    pub zeroed_feature_rows: NodeSet,
}

/// Removes whatever of `r` is present in `g`; absent elements are skipped.
pub(crate) fn strip(g: &Graph, r: &UnlearnRequest) -> GraphDelta {
    let mut removed_edges = BTreeSet::new();
    let mut removed_nodes = NodeSet::new();
    let mut zeroed = NodeSet::new();
    let mut features = g.features().clone();
    let mut train = g.train_mask().to_vec();
    let mut test = g.test_mask().to_vec();

    let keep: Vec<Edge> = match r {
        UnlearnRequest::Node(nodes) => {
            for &v in nodes {
                features.row_mut(v).fill(0.0);
                train[v] = false;
                test[v] = false;
            }
            removed_nodes = nodes.clone();
            zeroed = nodes.clone();
            g.edges()
                .into_iter()
                .filter(|e| {
                    let hit = nodes.contains(&e.lo()) || nodes.contains(&e.hi());
                    if hit {
                        removed_edges.insert(*e);
                    }
                    !hit
                })
                .collect()
        }
        UnlearnRequest::Edge(edges) => g
            .edges()
            .into_iter()
            .filter(|e| {
                let hit = edges.contains(e);
                if hit {
                    removed_edges.insert(*e);
                }
                !hit
            })
            .collect(),
        UnlearnRequest::Feature(nodes) => {
            for &v in nodes {
                features.row_mut(v).fill(0.0);
            }
            zeroed = nodes.clone();
            g.edges()
        }
    };
    let remaining = Graph::new(
        features,
        g.labels().to_vec(),
        g.num_classes(),
        &keep,
        train,
        test,
    )
    .expect("removing elements keeps a valid graph");
    GraphDelta {
        remaining,
        removed_edges,
        removed_nodes,
        zeroed_feature_rows: zeroed,
    }
}
