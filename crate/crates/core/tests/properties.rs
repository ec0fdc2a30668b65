mod common;

use agu::graph::{hop_distances, k_hop_set, normalized_adjacency, Edge, Graph, NodeSet, UnlearnRequest};
use agu::model::{decode_checkpoint, encode_checkpoint, init_model, train, Arch, TrainConfig};
use agu::neighbors::{
    affected_by_probe, build_neighbor_report, eligible_nodes, filter_marginal, marginal_filter, FilterConfig,
};
use agu::numeric::{SparseMatrix, Tape, Tensor};
use agu::unlearn::{unlearn, UnlearnConfig};
use agu::AguError;
use common::*;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng as _;

const ARCHS: [Arch; 5] = Arch::ALL;

fn graph_for(seed: u64, n: usize) -> Graph {
    random_connected_graph(n, 4, 3, 0.12, &mut rng(seed))
}

fn some_edge(g: &Graph, seed: u64) -> Edge {
    let all = g.edges();
    all[rng(seed).gen_range(0..all.len())]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn csr_layout_is_consistent(rows in 1usize..10, cols in 1usize..10, seed in any::<u64>()) {
        let r = &mut rng(seed);
        let mut trip = Vec::new();
        for i in 0..rows {
            for j in 0..cols {
                if r.gen_bool(0.35) {
                    trip.push((i, j, r.gen_range(-1.0..1.0)));
                }
            }
        }
        trip.shuffle(r);
        let s = SparseMatrix::from_triplets(rows, cols, trip.clone()).unwrap();
        let off = s.row_offsets();
        prop_assert_eq!(off.len(), rows + 1);
        prop_assert_eq!(off[rows], s.nnz());
        prop_assert!(off.windows(2).all(|w| w[0] <= w[1]));
        for i in 0..rows {
            let c = &s.col_indices()[off[i]..off[i + 1]];
            prop_assert!(c.windows(2).all(|w| w[0] < w[1]));
        }
        for &(i, j, v) in &trip {
            prop_assert_eq!(s.get(i, j), v);
        }
        let d = uniform(rows, 3, -1.0, 1.0, r);
        let t = s.spmm_transposed(&d).unwrap();
        let oracle = s.to_dense().transpose().matmul(&d).unwrap();
        prop_assert!(t.zip_map(&oracle, |a, b| (a - b).abs()).max_abs() <= 1e-12);
    }

    #[test]
    fn duplicate_triplets_are_rejected(r in 0usize..4, c in 0usize..4) {
        let err = SparseMatrix::from_triplets(4, 4, vec![(r, c, 1.0), (r, c, 2.0)]);
        prop_assert!(err.is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one_and_self_divergence_is_zero(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let tape = Tape::new();
        let z = uniform(rows, cols, -30.0, 30.0, &mut rng(seed));
        let p = tape.constant(z).row_softmax();
        let pv = (*p.value()).clone();
        for i in 0..rows {
            prop_assert!((pv.row(i).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        let all: Vec<usize> = (0..rows).collect();
        let kl = p.kl_rows_from(&pv, &all).unwrap();
        // Entries below the floor are the only source of a nonzero value.
        let floored = pv.data().iter().any(|&x| x > 0.0 && x < agu::numeric::KL_FLOOR);
        if !floored {
            prop_assert_eq!(kl.value().max_abs(), 0.0);
        }
    }

    #[test]
    fn node_and_feature_requests_apply_idempotently(seed in any::<u64>(), n in 4usize..20) {
        let g = graph_for(seed, n);
        let r = &mut rng(seed ^ 1);
        let nodes: NodeSet = (0..r.gen_range(1..3)).map(|_| r.gen_range(0..n)).collect();
        for req in [UnlearnRequest::Node(nodes.clone()), UnlearnRequest::Feature(nodes.clone())] {
            let once = req.apply(&g).unwrap();
            let twice = req.apply(&once.remaining).unwrap();
            prop_assert_eq!(&once.remaining, &twice.remaining);
            prop_assert_eq!(once.remaining.num_nodes(), n);
            prop_assert_eq!(once.remaining.num_features(), g.num_features());
        }
    }

    #[test]
    fn edge_requests_keep_nodes_and_reject_reapplication(seed in any::<u64>(), n in 4usize..20) {
        let g = graph_for(seed, n);
        let req = UnlearnRequest::Edge([some_edge(&g, seed)].into());
        let once = req.apply(&g).unwrap();
        prop_assert_eq!(once.remaining.num_nodes(), n);
        prop_assert_eq!(once.remaining.num_edges(), g.num_edges() - 1);
        prop_assert_eq!(once.remaining.features(), g.features());
        prop_assert!(matches!(req.apply(&once.remaining), Err(AguError::Reference(_))));
    }

    #[test]
    fn normalized_adjacency_is_symmetric(seed in any::<u64>(), n in 2usize..25) {
        let g = graph_for(seed, n);
        prop_assert!(normalized_adjacency(&g, true).is_symmetric(0.0));
        prop_assert!(normalized_adjacency(&g, false).is_symmetric(0.0));
    }

    #[test]
    fn forward_is_permutation_equivariant(seed in any::<u64>(), n in 3usize..16, a in 0usize..5) {
        let arch = ARCHS[a];
        let g = graph_for(seed, n);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng(seed ^ 2));
        let pg = g.permuted(&perm).unwrap();
        let m = init_model(arch, &[4, 8, 3], seed).unwrap();
        let (x, y) = (m.forward(&g).unwrap().logits, m.forward(&pg).unwrap().logits);
        for v in 0..n {
            for (p, q) in x.row(v).iter().zip(y.row(perm[v])) {
                prop_assert!((p - q).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn logits_depend_only_on_the_k_hop_ball(seed in any::<u64>(), n in 4usize..20, a in 0usize..5, k in 1usize..4) {
        let arch = ARCHS[a];
        let g = random_connected_graph(n, 4, 3, 0.05, &mut rng(seed));
        let v = rng(seed ^ 3).gen_range(0..n);
        let mut ball = k_hop_set(&g, v, k);
        ball.insert(v);
        let mut x = g.features().clone();
        let r = &mut rng(seed ^ 4);
        for w in (0..n).filter(|w| !ball.contains(w)) {
            x.row_mut(w).iter_mut().for_each(|e| *e += r.gen_range(-5.0..5.0));
        }
        let h = g.with_features(x).unwrap();
        let mut dims = vec![4];
        dims.extend(std::iter::repeat_n(6, k - 1));
        dims.push(3);
        let m = init_model(arch, &dims, seed).unwrap();
        let (p, q) = (m.forward(&g).unwrap().logits, m.forward(&h).unwrap().logits);
        prop_assert_eq!(p.row(v), q.row(v));
    }

    #[test]
    fn edge_deletion_reach_splits_by_degree_sensitivity(seed in any::<u64>(), n in 4usize..20, a in 0usize..5) {
        let arch = ARCHS[a];
        let g = graph_for(seed, n);
        let e = some_edge(&g, seed);
        let remaining = UnlearnRequest::Edge([e].into()).apply(&g).unwrap().remaining;
        let m = init_model(arch, &[4, 8, 3], seed).unwrap();
        let (x, y) = (m.forward(&g).unwrap().logits, m.forward(&remaining).unwrap().logits);
        let dist = hop_distances(&g, [e.lo(), e.hi()]);
        let bound = if arch.is_degree_based() { 2 } else { 1 };
        for v in 0..n {
            if x.row(v) != y.row(v) {
                prop_assert!(dist[v].unwrap() <= bound, "{arch} node {v} at {:?}", dist[v]);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bitwise(seed in any::<u64>(), a in 0usize..5, layers in 1usize..4) {
        let arch = ARCHS[a];
        let mut dims = vec![4];
        dims.extend(std::iter::repeat_n(5, layers - 1));
        dims.push(3);
        let m = init_model(arch, &dims, seed).unwrap();
        let back = decode_checkpoint(&encode_checkpoint(&m)).unwrap();
        prop_assert_eq!(&back, &m);
        let g = graph_for(seed, 9);
        let (p, q) = (m.forward(&g).unwrap(), back.forward(&g).unwrap());
        prop_assert_eq!(p.logits.data(), q.logits.data());
        prop_assert_eq!(p.embeddings.data(), q.embeddings.data());
    }

    #[test]
    fn kept_set_shrinks_as_theta_grows(seed in any::<u64>(), n in 1usize..30) {
        let r = &mut rng(seed);
        let removed = uniform(n, 3, -1.0, 1.0, r);
        let random = uniform(n, 3, -1.0, 1.0, r);
        let cands: NodeSet = (0..n).filter(|_| r.gen_bool(0.7)).collect();
        let mut prev: Option<NodeSet> = None;
        for theta in [0.0, 5e-5, 1e-4, 5e-4, 1e-2, 0.1, 1.0, f64::INFINITY] {
            let kept = filter_marginal(&removed, &random, &cands, theta).unwrap().kept;
            prop_assert!(kept.is_subset(&cands));
            if let Some(p) = &prev {
                prop_assert!(kept.is_subset(p));
            }
            prev = Some(kept);
        }
        prop_assert!(prev.unwrap().is_empty());
    }
}

#[test]
fn negative_theta_is_a_config_error() {
    let t = Tensor::zeros(2, 2);
    assert!(matches!(
        filter_marginal(&t, &t, &NodeSet::new(), -1e-9),
        Err(AguError::Config(_))
    ));
    let g = graph_for(1, 8);
    let req = UnlearnRequest::Node([0].into());
    let delta = req.apply(&g).unwrap();
    assert!(matches!(
        marginal_filter(&g, &delta, &req, &NodeSet::new(), 2, -0.5, 0),
        Err(AguError::Config(_))
    ));
}

#[test]
fn marginal_filter_keep_set_is_monotone_on_random_graphs() {
    for i in 0..30 {
        let g = graph_for(100 + i, 25);
        let req = UnlearnRequest::Node([(i as usize) % 25].into());
        let delta = req.apply(&g).unwrap();
        let affected = eligible_nodes(&g, &req);
        let mut prev: Option<NodeSet> = None;
        for theta in [0.0, 5e-5, 1e-4, 5e-4, 1e-2] {
            let kept = marginal_filter(&g, &delta, &req, &affected, 2, theta, 7).unwrap().kept;
            if let Some(p) = &prev {
                assert!(kept.is_subset(p), "instance {i} theta {theta}");
            }
            prev = Some(kept);
        }
    }
}

#[test]
fn neighbor_report_sets_are_nested() {
    for i in 0..40u64 {
        let arch = ARCHS[(i % 5) as usize];
        let g = graph_for(200 + i, 20);
        let r = &mut rng(300 + i);
        let req = match i % 3 {
            0 => UnlearnRequest::Node([r.gen_range(0..20)].into()),
            1 => UnlearnRequest::Edge([some_edge(&g, i)].into()),
            _ => UnlearnRequest::Feature([r.gen_range(0..20)].into()),
        };
        let delta = req.apply(&g).unwrap();
        let f_g = init_model(arch, &[4, 8, 3], i).unwrap();
        let cfg = FilterConfig { probe_seed: i, ..FilterConfig::default() };
        let rep = build_neighbor_report(&f_g, &g, &delta, &req, &cfg).unwrap();
        let eligible = eligible_nodes(&g, &req);
        assert!(rep.n_ac.is_subset(&eligible));
        assert!(rep.n_aff.is_subset(&eligible));
        assert!(rep.pool.is_subset(&rep.n_ac));
        assert!(rep.n_han.is_subset(&rep.pool));
        assert!(rep.n_fmn.is_subset(&rep.marginal));
        assert!(rep.marginal.is_subset(&rep.n_ac));
        let want = (cfg.k_ans_fraction * rep.pool.len() as f64).ceil() as usize;
        assert_eq!(rep.n_han.len(), want.min(rep.pool.len()));
        if !arch.is_degree_based() || matches!(req, UnlearnRequest::Feature(_)) {
            assert!(rep.marginal.is_empty());
            assert_eq!(rep.pool, rep.n_ac);
        }
    }
}

#[test]
fn probe_sets_agree_across_probe_seeds() {
    for i in 0..20u64 {
        let arch = ARCHS[(i % 5) as usize];
        let g = graph_for(400 + i, 18);
        let req = UnlearnRequest::Edge([some_edge(&g, i)].into());
        let delta = req.apply(&g).unwrap();
        let eligible = eligible_nodes(&g, &req);
        let a = affected_by_probe(arch, &[4, 8, 3], &g, &delta, &eligible, 1, 1e-9).unwrap();
        let b = affected_by_probe(arch, &[4, 8, 3], &g, &delta, &eligible, 2, 1e-9).unwrap();
        if !a.ambiguous && !b.ambiguous {
            assert_eq!(a.nodes, b.nodes, "{arch} instance {i}");
        }
    }
}

#[test]
fn training_and_unlearning_are_bitwise_deterministic() {
    let g = graph_for(9, 30);
    for arch in ARCHS {
        let cfg = TrainConfig { epochs: 20, seed: 5, ..TrainConfig::default() };
        let run = || {
            let mut m = init_model(arch, &[4, 8, 3], 5).unwrap();
            train(&mut m, &g, &cfg).unwrap();
            m
        };
        let (a, b) = (run(), run());
        assert_eq!(a, b);
        assert_eq!(a.forward(&g).unwrap().logits.data(), b.forward(&g).unwrap().logits.data());

        let req = UnlearnRequest::Node([3, 11].into());
        let ucfg = UnlearnConfig { epochs: 5, seed: 8, ..UnlearnConfig::default() };
        let u1 = unlearn(&a, &g, &req, &ucfg).unwrap();
        let u2 = unlearn(&a, &g, &req, &ucfg).unwrap();
        assert_eq!(u1.model, u2.model);
        assert_eq!(u1.model.param_shapes(), a.param_shapes());
        assert_eq!(u1.trace.total.len(), ucfg.epochs);
        for x in u1.trace.ef.iter().chain(&u1.trace.an) {
            assert!(x.abs() <= ucfg.kl_cap);
        }
    }
}
