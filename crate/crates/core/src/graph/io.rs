//! Tab-separated text formats for graphs, masks and unlearning requests.
//!
//! `graph.tsv`
//! ```text
//! n d C
//! node_id<TAB>label<TAB>f1,f2,...,fd      (n lines)
//! #edges
//! u<TAB>v                                  (one line per undirected edge)
//! ```
//! `masks.tsv`: `node_id<TAB>train|test` per line.
//! `request.tsv`: `node|edge|feature`, then one id (or `u<TAB>v`) per line.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Edge, Graph, NodeSet, RequestKind, UnlearnRequest};
use crate::error::{AguError, Result};
use crate::numeric::Tensor;

struct Lines<'a> {
    path: PathBuf,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn new(path: &Path, text: &'a str) -> Self {
        Lines {
            path: path.to_path_buf(),
            iter: text.lines().enumerate(),
        }
    }

    /// Next non-blank line with its 1-based number.
    fn next_line(&mut self) -> Option<(usize, &'a str)> {
        for (i, l) in self.iter.by_ref() {
            let l = l.trim_end_matches('\r');
            if !l.trim().is_empty() {
                return Some((i + 1, l));
            }
        }
        None
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> AguError {
        AguError::Parse {
            path: self.path.clone(),
            line,
            msg: msg.into(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(lines: &Lines<'_>, line: usize, s: &str, what: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| lines.err(line, format!("invalid {what} {:?}", s.trim())))
}

pub fn read_graph(path: &Path, text: &str) -> Result<Graph> {
    let mut lines = Lines::new(path, text);
    let (hl, header) = lines.next_line().ok_or_else(|| lines.err(1, "missing header"))?;
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() != 3 {
        return Err(lines.err(hl, "header must be `n d C`"));
    }
    let n: usize = parse_num(&lines, hl, head[0], "node count")?;
    let d: usize = parse_num(&lines, hl, head[1], "feature dimension")?;
    let c: usize = parse_num(&lines, hl, head[2], "class count")?;
    if c == 0 {
        return Err(lines.err(hl, "class count must be positive"));
    }

    let mut features = Tensor::zeros(n, d);
    let mut labels = vec![0usize; n];
    let mut seen = vec![false; n];
    for _ in 0..n {
        let (ln, l) = lines
            .next_line()
            .ok_or_else(|| lines.err(hl, format!("expected {n} feature lines")))?;
        let parts: Vec<&str> = l.split('\t').collect();
        if parts.len() != 3 {
            return Err(lines.err(ln, "feature line must be `id<TAB>label<TAB>f1,...,fd`"));
        }
        let id: usize = parse_num(&lines, ln, parts[0], "node id")?;
        if id >= n {
            return Err(lines.err(ln, format!("node id {id} out of range 0..{n}")));
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(lines.err(ln, format!("node {id} listed twice")));
        }
        let label: usize = parse_num(&lines, ln, parts[1], "label")?;
        if label >= c {
            return Err(lines.err(ln, format!("label {label} out of range 0..{c}")));
        }
        labels[id] = label;
        let vals: Vec<&str> = if parts[2].trim().is_empty() {
            Vec::new()
        } else {
            parts[2].split(',').collect()
        };
        if vals.len() != d {
            return Err(lines.err(ln, format!("{} feature values, expected {d}", vals.len())));
        }
        for (j, v) in vals.iter().enumerate() {
            let x: f64 = parse_num(&lines, ln, v, "feature value")?;
            if !x.is_finite() {
                return Err(lines.err(ln, "non-finite feature value"));
            }
            features.set(id, j, x);
        }
    }
    match lines.next_line() {
        Some((_, "#edges")) => {}
        Some((ln, _)) => return Err(lines.err(ln, "expected `#edges`")),
        None => return Err(lines.err(hl, "missing `#edges` section")),
    }
    let mut edges = BTreeSet::new();
    while let Some((ln, l)) = lines.next_line() {
        let parts: Vec<&str> = l.split('\t').collect();
        if parts.len() != 2 {
            return Err(lines.err(ln, "edge line must be `u<TAB>v`"));
        }
        let u: usize = parse_num(&lines, ln, parts[0], "node id")?;
        let v: usize = parse_num(&lines, ln, parts[1], "node id")?;
        if u >= n || v >= n {
            return Err(lines.err(ln, format!("edge ({u},{v}) out of range 0..{n}")));
        }
        let e = Edge::new(u, v).map_err(|_| lines.err(ln, format!("self-loop on {u}")))?;
        if !edges.insert(e) {
            return Err(lines.err(ln, format!("duplicate edge ({u},{v})")));
        }
    }
    let edges: Vec<Edge> = edges.into_iter().collect();
    Graph::new(features, labels, c, &edges, vec![false; n], vec![false; n])
}

pub fn read_masks(path: &Path, text: &str, n: usize) -> Result<(Vec<bool>, Vec<bool>)> {
    let mut lines = Lines::new(path, text);
    let mut train = vec![false; n];
    let mut test = vec![false; n];
    while let Some((ln, l)) = lines.next_line() {
        let parts: Vec<&str> = l.split('\t').collect();
        if parts.len() != 2 {
            return Err(lines.err(ln, "mask line must be `id<TAB>train|test`"));
        }
        let id: usize = parse_num(&lines, ln, parts[0], "node id")?;
        if id >= n {
            return Err(lines.err(ln, format!("node id {id} out of range 0..{n}")));
        }
        if train[id] || test[id] {
            return Err(lines.err(ln, format!("node {id} listed twice")));
        }
        match parts[1].trim() {
            "train" => train[id] = true,
            "test" => test[id] = true,
            other => return Err(lines.err(ln, format!("unknown split {other:?}"))),
        }
    }
    Ok((train, test))
}

pub fn read_request(path: &Path, text: &str, n: usize) -> Result<UnlearnRequest> {
    let mut lines = Lines::new(path, text);
    let (kl, kind_line) = lines.next_line().ok_or_else(|| lines.err(1, "empty request file"))?;
    let kind: RequestKind = kind_line.parse().map_err(|e: AguError| lines.err(kl, e.to_string()))?;
    let mut nodes = NodeSet::new();
    let mut edges = BTreeSet::new();
    while let Some((ln, l)) = lines.next_line() {
        let parts: Vec<&str> = l.split('\t').collect();
        match kind {
            RequestKind::Node | RequestKind::Feature => {
                if parts.len() != 1 {
                    return Err(lines.err(ln, "expected one node id"));
                }
                let v: usize = parse_num(&lines, ln, parts[0], "node id")?;
                if v >= n {
                    return Err(lines.err(ln, format!("node id {v} out of range 0..{n}")));
                }
                if !nodes.insert(v) {
                    return Err(lines.err(ln, format!("node {v} listed twice")));
                }
            }
            RequestKind::Edge => {
                if parts.len() != 2 {
                    return Err(lines.err(ln, "expected `u<TAB>v`"));
                }
                let u: usize = parse_num(&lines, ln, parts[0], "node id")?;
                let v: usize = parse_num(&lines, ln, parts[1], "node id")?;
                if u >= n || v >= n {
                    return Err(lines.err(ln, format!("edge ({u},{v}) out of range 0..{n}")));
                }
                let e = Edge::new(u, v).map_err(|_| lines.err(ln, format!("self-loop on {u}")))?;
                if !edges.insert(e) {
                    return Err(lines.err(ln, format!("duplicate edge ({u},{v})")));
                }
            }
        }
    }
    let req = match kind {
        RequestKind::Node => UnlearnRequest::Node(nodes),
        RequestKind::Edge => UnlearnRequest::Edge(edges),
        RequestKind::Feature => UnlearnRequest::Feature(nodes),
    };
    if req.is_empty() {
        return Err(lines.err(kl, "request lists no elements"));
    }
    Ok(req)
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| AguError::io(path, e))
}

/// Loads `graph.tsv` and, when given, `masks.tsv`.
pub fn load_graph(graph_path: &Path, masks_path: Option<&Path>) -> Result<Graph> {
    let g = read_graph(graph_path, &read_file(graph_path)?)?;
    match masks_path {
        Some(mp) => {
            let (train, test) = load_masks(mp, g.num_nodes())?;
            g.with_masks(train, test)
        }
        None => Ok(g),
    }
}

pub fn load_masks(path: &Path, n: usize) -> Result<(Vec<bool>, Vec<bool>)> {
    read_masks(path, &read_file(path)?, n)
}

pub fn load_request(path: &Path, n: usize) -> Result<UnlearnRequest> {
    read_request(path, &read_file(path)?, n)
}

pub fn format_graph(g: &Graph) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{} {} {}", g.num_nodes(), g.num_features(), g.num_classes());
    for v in 0..g.num_nodes() {
        let feats: Vec<String> = g.features().row(v).iter().map(|x| format!("{x}")).collect();
        let _ = writeln!(s, "{v}\t{}\t{}", g.labels()[v], feats.join(","));
    }
    s.push_str("#edges\n");
    for e in g.edges() {
        let _ = writeln!(s, "{}\t{}", e.lo(), e.hi());
    }
    s
}

pub fn format_masks(g: &Graph) -> String {
    let mut s = String::new();
    for v in 0..g.num_nodes() {
        if g.train_mask()[v] {
            let _ = writeln!(s, "{v}\ttrain");
        } else if g.test_mask()[v] {
            let _ = writeln!(s, "{v}\ttest");
        }
    }
    s
}

pub fn format_request(r: &UnlearnRequest) -> String {
    let mut s = format!("{}\n", r.kind());
    match r {
        UnlearnRequest::Node(ns) | UnlearnRequest::Feature(ns) => {
            for v in ns {
                let _ = writeln!(s, "{v}");
            }
        }
        UnlearnRequest::Edge(es) => {
            for e in es {
                let _ = writeln!(s, "{}\t{}", e.lo(), e.hi());
            }
        }
    }
    s
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| AguError::io(path, e))
}

pub fn write_graph(path: &Path, g: &Graph) -> Result<()> {
    write_file(path, &format_graph(g))
}

pub fn write_masks(path: &Path, g: &Graph) -> Result<()> {
    write_file(path, &format_masks(g))
}

pub fn write_request(path: &Path, r: &UnlearnRequest) -> Result<()> {
    write_file(path, &format_request(r))
}
