#![allow(dead_code)]

pub mod grad_suite;

use agu::graph::{Edge, Graph};
use agu::numeric::{Tape, Tensor, Var};
use agu::seed::{self, Rng};
use rand::seq::SliceRandom;
use rand::Rng as _;

pub fn rng(s: u64) -> Rng {
    seed::rng(s)
}

pub fn uniform(rows: usize, cols: usize, lo: f64, hi: f64, r: &mut Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| r.gen_range(lo..hi)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Entries with magnitude in [0.1, 1] and random sign, so that nothing sits
/// near a kink at zero.
pub fn away_from_zero(rows: usize, cols: usize, r: &mut Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = r.gen_range(0.1..1.0);
            if r.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

pub fn random_labels(n: usize, classes: usize, r: &mut Rng) -> Vec<usize> {
    (0..n).map(|_| r.gen_range(0..classes)).collect()
}

/// Connected graph: a random spanning tree plus each other pair with
/// probability `p`.
pub fn random_connected_edges(n: usize, p: f64, r: &mut Rng) -> Vec<Edge> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(r);
    let mut edges = std::collections::BTreeSet::new();
    for i in 1..n {
        let parent = order[r.gen_range(0..i)];
        edges.insert(Edge::new(order[i], parent).unwrap());
    }
    for a in 0..n {
        for b in a + 1..n {
            if r.gen_bool(p) {
                edges.insert(Edge::new(a, b).unwrap());
            }
        }
    }
    edges.into_iter().collect()
}

pub fn graph_from(edges: &[Edge], features: Tensor, classes: usize, r: &mut Rng) -> Graph {
    let n = features.rows();
    let labels = random_labels(n, classes, r);
    let train: Vec<bool> = (0..n).map(|v| v % 2 == 0).collect();
    let test: Vec<bool> = train.iter().map(|t| !t).collect();
    Graph::new(features, labels, classes, edges, train, test).unwrap()
}

pub fn random_connected_graph(n: usize, d: usize, classes: usize, p: f64, r: &mut Rng) -> Graph {
    let edges = random_connected_edges(n, p, r);
    let x = uniform(n, d, -1.0, 1.0, r);
    graph_from(&edges, x, classes, r)
}

pub fn chain(n: usize) -> Graph {
    let edges: Vec<Edge> = (0..n - 1).map(|i| Edge::new(i, i + 1).unwrap()).collect();
    Graph::new(Tensor::identity(n), vec![0; n], 1, &edges, vec![true; n], vec![false; n]).unwrap()
}

pub fn dense_adjacency(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.num_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for e in g.edges() {
        a[e.lo()][e.hi()] = 1.0;
        a[e.hi()][e.lo()] = 1.0;
    }
    a
}

/// Dense `D^{-1/2}(A [+ I])D^{-1/2}` built from the edge list.
pub fn dense_normalized(g: &Graph, self_loops: bool) -> Tensor {
    let n = g.num_nodes();
    let mut a = dense_adjacency(g);
    if self_loops {
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = 1.0;
        }
    }
    let deg: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let mut t = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if a[i][j] != 0.0 {
                t.set(i, j, a[i][j] / (deg[i] * deg[j]).sqrt());
            }
        }
    }
    t
}

pub fn dense_power(m: &Tensor, k: usize) -> Tensor {
    let mut p = Tensor::identity(m.rows());
    for _ in 0..k {
        p = p.matmul(m).unwrap();
    }
    p
}

/// All-pairs hop distances; `usize::MAX` for unreachable pairs.
pub fn floyd_warshall(g: &Graph) -> Vec<Vec<usize>> {
    let n = g.num_nodes();
    let inf = usize::MAX;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for e in g.edges() {
        d[e.lo()][e.hi()] = 1;
        d[e.hi()][e.lo()] = 1;
    }
    for k in 0..n {
        for i in 0..n {
            if d[i][k] == inf {
                continue;
            }
            for j in 0..n {
                if d[k][j] != inf && d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Distance from the nearest source.
pub fn distance_to_set(fw: &[Vec<usize>], sources: &[usize], v: usize) -> usize {
    sources.iter().map(|&s| fw[s][v]).min().unwrap_or(usize::MAX)
}

/// Maximum entrywise relative error between the taped gradient of `f` and
/// central differences with step `h`. The denominator is floored at 1e-6.
pub fn gradcheck<F>(inputs: &[Tensor], h: f64, f: F) -> f64
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let tape = Tape::new();
    let vars: Vec<Var<'_>> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = f(&tape, &vars);
    assert_eq!(out.shape(), (1, 1), "gradcheck needs a scalar output");
    tape.backward(out).unwrap();
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| v.grad().unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols())))
        .collect();

    let eval = |ins: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = ins.iter().map(|t| tape.param(t.clone())).collect();
        
        f(&tape, &vars).item().unwrap()
    };

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = inputs.to_vec();
    for i in 0..inputs.len() {
        for j in 0..inputs[i].len() {
            let x0 = inputs[i].data()[j];
            work[i].data_mut()[j] = x0 + h;
            let fp = eval(&work);
            work[i].data_mut()[j] = x0 - h;
            let fm = eval(&work);
            work[i].data_mut()[j] = x0;
            let numeric = (fp - fm) / (2.0 * h);
            let a = analytic[i].data()[j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Removes every key ending in `_ms` or named `created_unix` from a JSON
/// value, recursively.
pub fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(map) => {
            map.retain(|k, _| !(k.ends_with("_ms") || k == "created_unix"));
            map.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(xs) => xs.iter_mut().for_each(strip_timing),
        _ => {}
    }
}
