use std::rc::Rc;

use agu::graph::{Edge, Graph};
use agu::model::{init_model, Arch, Prepared};
use agu::numeric::{attention, cross_entropy, kl_divergence, mse, SparseMatrix, Tape, Tensor, Var};
use agu::seed::derive_indexed;
use agu::unlearn::{
    candidate_sets, edge_consistency, loss_an, loss_dec_baseline, loss_eu, loss_fu, loss_nu,
    random_pairs, reverse_ce_baseline,
};
use rand::Rng as _;

use super::{away_from_zero, gradcheck, random_connected_graph, random_labels, rng, uniform};

pub const STEP: f64 = 1e-5;

pub const KINDS: [&str; 36] = [
    "matmul",
    "spmm",
    "add",
    "sub",
    "mul",
    "add_bias",
    "scale",
    "relu",
    "leaky_relu",
    "exp",
    "log",
    "concat_cols",
    "gather_rows",
    "row_softmax",
    "row_log_softmax",
    "sum",
    "mean_rows",
    "mean",
    "clamp_max",
    "cross_entropy_rows",
    "kl_rows",
    "attention",
    "loss:cross_entropy",
    "loss:kl_divergence",
    "loss:mse",
    "loss:edge_consistency",
    "loss:dec_baseline",
    "loss:eu",
    "loss:fu",
    "loss:nu",
    "loss:an",
    "loss:reverse_ce",
    "model:gcn",
    "model:sgc",
    "model:gat",
    "model:gin",
];

fn wsum<'t>(tape: &'t Tape, x: Var<'t>, w: &Tensor) -> Var<'t> {
    x.mul(tape.constant(w.clone())).unwrap().sum()
}

fn random_sparse(rows: usize, cols: usize, r: &mut agu::seed::Rng) -> SparseMatrix {
    let mut t = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            if r.gen_bool(0.5) {
                t.push((i, j, r.gen_range(-1.0..1.0)));
            }
        }
    }
    SparseMatrix::from_triplets(rows, cols, t).unwrap()
}

fn distributions(rows: usize, cols: usize, r: &mut agu::seed::Rng) -> Tensor {
    let mut t = uniform(rows, cols, 0.0, 1.0, r);
    for i in 0..rows {
        if cols > 1 && r.gen_bool(0.3) {
            t.set(i, r.gen_range(0..cols), 0.0);
        }
        let s: f64 = t.row(i).iter().sum();
        t.row_mut(i).iter_mut().for_each(|x| *x /= s);
    }
    t
}

fn some_rows(n: usize, r: &mut agu::seed::Rng) -> Vec<usize> {
    let k = r.gen_range(1..=n);
    (0..k).map(|_| r.gen_range(0..n)).collect()
}

fn small_graph(r: &mut agu::seed::Rng) -> Graph {
    let n = r.gen_range(5..=9);
    random_connected_graph(n, 3, 3, 0.3, r)
}

/// Runs case `i`; returns its kind and worst relative error.
pub fn run_case(i: usize) -> (&'static str, f64) {
    let kind = KINDS[i % KINDS.len()];
    let seed = derive_indexed(0x6a7d, "grad", i as u64);
    let r = &mut rng(seed);
    let (m, n, p) = (r.gen_range(1..=5), r.gen_range(2..=5), r.gen_range(1..=5));
    let h = STEP;
    let err = match kind {
        "matmul" => {
            let (a, b, w) = (uniform(m, n, -1., 1., r), uniform(n, p, -1., 1., r), uniform(m, p, -1., 1., r));
            gradcheck(&[a, b], h, |t, v| wsum(t, v[0].matmul(v[1]).unwrap(), &w))
        }
        "spmm" => {
            let s = Rc::new(random_sparse(m, n, r));
            let (x, w) = (uniform(n, p, -1., 1., r), uniform(m, p, -1., 1., r));
            gradcheck(&[x], h, |t, v| wsum(t, v[0].spmm_by(&s).unwrap(), &w))
        }
        "add" | "sub" | "mul" => {
            let (a, b, w) = (uniform(m, n, -1., 1., r), uniform(m, n, -1., 1., r), uniform(m, n, -1., 1., r));
            gradcheck(&[a, b], h, |t, v| {
                let out = match kind {
                    "add" => v[0].add(v[1]),
                    "sub" => v[0].sub(v[1]),
                    _ => v[0].mul(v[1]),
                };
                wsum(t, out.unwrap(), &w)
            })
        }
        "add_bias" => {
            let (a, b, w) = (uniform(m, n, -1., 1., r), uniform(1, n, -1., 1., r), uniform(m, n, -1., 1., r));
            gradcheck(&[a, b], h, |t, v| wsum(t, v[0].add_bias(v[1]).unwrap(), &w))
        }
        "scale" => {
            let (a, w, s) = (uniform(m, n, -1., 1., r), uniform(m, n, -1., 1., r), r.gen_range(-3.0..3.0));
            gradcheck(&[a], h, |t, v| wsum(t, v[0].scale(s), &w))
        }
        "relu" | "leaky_relu" | "clamp_max" => {
            let (a, w) = (away_from_zero(m, n, r), uniform(m, n, -1., 1., r));
            gradcheck(&[a], h, |t, v| {
                let out = match kind {
                    "relu" => v[0].relu(),
                    "leaky_relu" => v[0].leaky_relu(0.2),
                    _ => v[0].clamp_max(0.0),
                };
                wsum(t, out, &w)
            })
        }
        "exp" => {
            let (a, w) = (uniform(m, n, -2., 2., r), uniform(m, n, -1., 1., r));
            gradcheck(&[a], h, |t, v| wsum(t, v[0].exp(), &w))
        }
        "log" => {
            let (a, w) = (uniform(m, n, 0.5, 2.0, r), uniform(m, n, -1., 1., r));
            gradcheck(&[a], h, |t, v| wsum(t, v[0].log().unwrap(), &w))
        }
        "concat_cols" => {
            let (a, b, w) = (uniform(m, n, -1., 1., r), uniform(m, p, -1., 1., r), uniform(m, n + p, -1., 1., r));
            gradcheck(&[a, b], h, |t, v| wsum(t, v[0].concat_cols(v[1]).unwrap(), &w))
        }
        "gather_rows" => {
            let idx = some_rows(m, r);
            let (a, w) = (uniform(m, n, -1., 1., r), uniform(idx.len(), n, -1., 1., r));
            gradcheck(&[a], h, |t, v| wsum(t, v[0].gather_rows(&idx).unwrap(), &w))
        }
        "row_softmax" | "row_log_softmax" => {
            let (a, w) = (uniform(m, n, -2., 2., r), uniform(m, n, -1., 1., r));
            gradcheck(&[a], h, |t, v| {
                let out = if kind == "row_softmax" { v[0].row_softmax() } else { v[0].row_log_softmax() };
                wsum(t, out, &w)
            })
        }
        "sum" => gradcheck(&[uniform(m, n, -1., 1., r)], h, |_, v| v[0].sum()),
        "mean_rows" => {
            let (a, w) = (uniform(m, n, -1., 1., r), uniform(1, n, -1., 1., r));
            gradcheck(&[a], h, |t, v| wsum(t, v[0].mean_rows().unwrap(), &w))
        }
        "mean" => gradcheck(&[uniform(m, n, -1., 1., r)], h, |_, v| v[0].mean().unwrap()),
        "cross_entropy_rows" => {
            let (labels, rows) = (random_labels(m, n, r), some_rows(m, r));
            let (a, w) = (uniform(m, n, -2., 2., r), uniform(rows.len(), 1, -1., 1., r));
            gradcheck(&[a], h, |t, v| wsum(t, v[0].cross_entropy_rows(&labels, &rows).unwrap(), &w))
        }
        "kl_rows" => {
            let (target, rows) = (distributions(m, n, r), some_rows(m, r));
            let (a, w) = (uniform(m, n, -2., 2., r), uniform(rows.len(), 1, -1., 1., r));
            gradcheck(&[a], h, |t, v| {
                wsum(t, v[0].row_softmax().kl_rows_from(&target, &rows).unwrap(), &w)
            })
        }
        "attention" => {
            let k = m + 1;
            let mut trip: Vec<(usize, usize, f64)> = (0..k).map(|i| (i, i, 1.0)).collect();
            for i in 0..k {
                for j in 0..k {
                    if i != j && r.gen_bool(0.4) {
                        trip.push((i, j, 1.0));
                    }
                }
            }
            let pattern = Rc::new(SparseMatrix::from_triplets(k, k, trip.clone()).unwrap());
            // Keep every pre-activation clear of the LeakyReLU kink.
            let (dst, src) = loop {
                let (d, s) = (uniform(k, 1, -1., 1., r), uniform(k, 1, -1., 1., r));
                if trip.iter().all(|&(i, j, _)| (d.get(i, 0) + s.get(j, 0)).abs() > 0.05) {
                    break (d, s);
                }
            };
            let (vals, w) = (uniform(k, n, -1., 1., r), uniform(k, n, -1., 1., r));
            gradcheck(&[dst, src, vals], h, |t, v| {
                wsum(t, attention(&pattern, v[0], v[1], v[2], 0.2).unwrap(), &w)
            })
        }
        "loss:cross_entropy" => {
            let (labels, rows) = (random_labels(m, n, r), some_rows(m, r));
            gradcheck(&[uniform(m, n, -2., 2., r)], h, |_, v| cross_entropy(v[0], &labels, &rows).unwrap())
        }
        "loss:kl_divergence" => {
            let (target, rows) = (distributions(m, n, r), some_rows(m, r));
            gradcheck(&[uniform(m, n, -2., 2., r)], h, |_, v| {
                kl_divergence(&target, v[0].row_softmax(), &rows).unwrap()
            })
        }
        "loss:mse" => {
            let (a, b) = (uniform(m, n, -1., 1., r), uniform(m, n, -1., 1., r));
            gradcheck(&[a, b], h, |_, v| mse(v[0], v[1]).unwrap())
        }
        "loss:edge_consistency" | "loss:dec_baseline" | "loss:eu" => {
            let g = small_graph(r);
            let all = g.edges();
            let edges: Vec<Edge> = (0..r.gen_range(1..=3)).map(|_| all[r.gen_range(0..all.len())]).collect();
            let nn = g.num_nodes();
            let (emb, frozen) = (uniform(nn, n, -1., 1., r), uniform(nn, n, -1., 1., r));
            let pair_seed: u64 = r.gen();
            let pairs = random_pairs(nn, edges.len(), &mut rng(pair_seed));
            let cands = candidate_sets(&g, &edges, 2);
            gradcheck(&[emb], h, |_, v| match kind {
                "loss:edge_consistency" => edge_consistency(v[0], &frozen, &edges, &pairs).unwrap(),
                "loss:dec_baseline" => loss_dec_baseline(v[0], &frozen, &edges, &mut rng(pair_seed)).unwrap(),
                _ => loss_eu(v[0], &frozen, &edges, &cands, &mut rng(pair_seed)).unwrap(),
            })
        }
        "loss:fu" => {
            let (y, rows) = (distributions(m, n, r), some_rows(m, r));
            let cap = if i.is_multiple_of(2) { 10.0 } else { 0.05 };
            gradcheck(&[uniform(m, n, -2., 2., r)], h, |_, v| {
                loss_fu(v[0].row_softmax(), &y, &rows, cap).unwrap()
            })
        }
        "loss:nu" => {
            let (emb, frozen) = (uniform(m + 1, n, -1., 1., r), uniform(m + 1, n, -1., 1., r));
            let edges = vec![Edge::new(0, m).unwrap()];
            let pairs = vec![(r.gen_range(0..=m), r.gen_range(0..=m))];
            let (y, rows) = (distributions(m + 1, p + 1, r), some_rows(m + 1, r));
            let z = uniform(m + 1, p + 1, -2., 2., r);
            let alpha = r.gen_range(0.0..1.0);
            gradcheck(&[emb, z], h, |_, v| {
                let e = edge_consistency(v[0], &frozen, &edges, &pairs).unwrap();
                let f = loss_fu(v[1].row_softmax(), &y, &rows, 10.0).unwrap();
                loss_nu(Some(e), f, alpha).unwrap()
            })
        }
        "loss:an" | "loss:reverse_ce" => {
            let (labels, rows) = (random_labels(m, n, r), some_rows(m, r));
            gradcheck(&[uniform(m, n, -2., 2., r)], h, |_, v| {
                if kind == "loss:an" {
                    loss_an(v[0], &labels, &rows, 10.0).unwrap()
                } else {
                    reverse_ce_baseline(v[0], &labels, &rows, 10.0).unwrap()
                }
            })
        }
        model => {
            // Odd visits of the last slot run SAGE.
            let arch = match model {
                "model:gcn" => Arch::Gcn,
                "model:sgc" => Arch::Sgc,
                "model:gat" => Arch::Gat,
                _ if (i / KINDS.len()) % 2 == 1 => Arch::Sage,
                _ => Arch::Gin,
            };
            let g = small_graph(r);
            let f = init_model(arch, &[3, 4, 3], r.gen()).unwrap();
            let prep = Prepared::new(arch, &g);
            // Zero-initialized biases would park some pre-activations exactly on
            // the ReLU kink.
            let params: Vec<Tensor> = f
                .params()
                .iter()
                .map(|t| if t.max_abs() == 0.0 { uniform(t.rows(), t.cols(), -0.5, 0.5, r) } else { t.clone() })
                .collect();
            let w = uniform(g.num_nodes(), 3, -1., 1., r);
            gradcheck(&params, h, |t, v| {
                wsum(t, f.forward_on(t, v, &prep, None).unwrap().logits, &w)
            })
        }
    };
    let label = if kind == "model:gin" && (i / KINDS.len()) % 2 == 1 { "model:sage" } else { kind };
    (label, err)
}
