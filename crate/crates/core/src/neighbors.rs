//! Which remaining nodes an unlearning request actually disturbs.
//!
//! Four sets are produced for a request:
//!
//! * `n_aff`: rows changed by the k-step self-loop-free normalized
//!   propagation of the features (the classic estimate).
//! * `n_ac`: rows whose output changes under a randomly initialized model
//!   of the trained architecture, run deterministically on the graph before
//!   and after removal. This is the authoritative affected set.
//! * `n_fmn`: for degree-normalized architectures, the marginal neighbors
//!   (the extra outer hop reached only through degree changes) whose change
//!   beats the change caused by deleting one random nearby edge by more
//!   than `theta`.
//! * `n_han`: the top `k_ans` fraction of the surviving pool ranked by the
//!   cosine distance between the trained model's embeddings before and
//!   after removal.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{AguError, Result};
use crate::graph::{hop_distances, k_hop_set, normalized_adjacency, Edge, Graph, GraphDelta, NodeSet, RequestKind, UnlearnRequest};
use crate::model::{init_model, Arch, Model};
use crate::numeric::{SparseMatrix, Tensor};
use crate::seed;

/// Number of random probe models whose affected sets must agree.
pub const PROBE_SEEDS: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub theta: f64,
    pub k_ans_fraction: f64,
    pub probe_seed: u64,
    pub probe_tolerance: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            theta: 1e-4,
            k_ans_fraction: 0.4,
            probe_seed: 0,
            probe_tolerance: 1e-9,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta >= 0.0) {
            return Err(AguError::Config(format!("theta must be >= 0, got {}", self.theta)));
        }
        if !(self.k_ans_fraction > 0.0 && self.k_ans_fraction <= 1.0) {
            return Err(AguError::Config(format!(
                "k_ans_fraction must be in (0, 1], got {}",
                self.k_ans_fraction
            )));
        }
        if !(self.probe_tolerance >= 0.0) {
            return Err(AguError::Config("probe tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborReport {
    pub n_aff: NodeSet,
    pub n_ac: NodeSet,
    /// Marginal candidates: affected nodes beyond the degree-free radius.
    pub marginal: NodeSet,
    pub n_fmn: NodeSet,
    /// `n_ac` minus the marginal candidates that failed the filter.
    pub pool: NodeSet,
    pub n_han: NodeSet,
    pub diff_scores: BTreeMap<usize, f64>,
    pub probe_ambiguous: bool,
}

/// `(Â_n^k X̂) − (A_n^k X)` with `·_n = D^{-1/2} · D^{-1/2}`, by repeated
/// sparse products.
pub fn propagation_delta_with(
    a: &SparseMatrix,
    a_hat: &SparseMatrix,
    x: &Tensor,
    x_hat: &Tensor,
    k: usize,
) -> Result<Tensor> {
    if a.shape() != a_hat.shape() {
        return Err(AguError::dim("propagation_delta", "adjacency shapes differ"));
    }
    x.same_shape(x_hat, "propagation_delta")?;
    if k == 0 {
        return Err(AguError::Config("propagation depth must be >= 1".into()));
    }
    let mut before = x.clone();
    let mut after = x_hat.clone();
    for _ in 0..k {
        before = a.spmm(&before)?;
        after = a_hat.spmm(&after)?;
    }
    Ok(after.zip_map(&before, |p, q| p - q))
}

/// [`propagation_delta_with`] with the same features on both sides.
pub fn propagation_delta(a: &SparseMatrix, a_hat: &SparseMatrix, x: &Tensor, k: usize) -> Result<Tensor> {
    propagation_delta_with(a, a_hat, x, x, k)
}

/// Rows of `delta` among `eligible` whose max-abs entry exceeds `tol`.
pub fn affected_by_propagation(delta: &Tensor, eligible: &NodeSet, tol: f64) -> NodeSet {
    eligible
        .iter()
        .copied()
        .filter(|&v| delta.row(v).iter().any(|x| x.abs() > tol))
        .collect()
}

/// Nodes eligible to be affected neighbors under `request`.
pub fn eligible_nodes(g: &Graph, request: &UnlearnRequest) -> NodeSet {
    let skip = request.element_nodes();
    (0..g.num_nodes()).filter(|v| !skip.contains(v)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbeOutcome {
    /// Union over probe seeds.
    pub nodes: NodeSet,
    /// Probe seeds disagreed.
    pub ambiguous: bool,
}

fn output_diff(a: &Tensor, b: &Tensor, eligible: &NodeSet, tol: f64) -> NodeSet {
    eligible
        .iter()
        .copied()
        .filter(|&v| a.row(v).iter().zip(b.row(v)).any(|(x, y)| (x - y).abs() > tol))
        .collect()
}

/// Affected set from randomly initialized models of `arch`.
pub fn affected_by_probe(
    arch: Arch,
    dims: &[usize],
    g: &Graph,
    delta: &GraphDelta,
    eligible: &NodeSet,
    seed: u64,
    tol: f64,
) -> Result<ProbeOutcome> {
    let mut union = NodeSet::new();
    let mut inter: Option<NodeSet> = None;
    for i in 0..PROBE_SEEDS {
        let probe = init_model(arch, dims, seed::derive_indexed(seed, "probe", i))?;
        let before = probe.forward(g)?.logits;
        let after = probe.forward(&delta.remaining)?.logits;
        let set = output_diff(&before, &after, eligible, tol);
        union.extend(set.iter().copied());
        inter = Some(match inter {
            None => set,
            Some(prev) => prev.intersection(&set).copied().collect(),
        });
    }
    let ambiguous = inter.is_some_and(|i| i != union);
    Ok(ProbeOutcome {
        nodes: union,
        ambiguous,
    })
}

/// Deletes, for each anchor in order, one uniformly chosen edge whose
/// endpoints both lie in the anchor's closed k-hop ball. Edges in
/// `protected` and edges already deleted are never chosen; anchors whose
/// ball offers no edge are skipped. All deletions share one copy of `g`.
pub fn perturb_adjacency(
    g: &Graph,
    anchors: &NodeSet,
    protected: &BTreeSet<Edge>,
    k: usize,
    seed: u64,
) -> Result<Graph> {
    let mut rng = seed::rng(seed);
    let mut deleted = BTreeSet::new();
    let all = g.edges();
    for &v in anchors {
        let mut ball = k_hop_set(g, v, k);
        ball.insert(v);
        let options: Vec<Edge> = all
            .iter()
            .copied()
            .filter(|e| ball.contains(&e.lo()) && ball.contains(&e.hi()))
            .filter(|e| !protected.contains(e) && !deleted.contains(e))
            .collect();
        if let Some(e) = options.choose(&mut rng) {
            deleted.insert(*e);
        }
    }
    let keep: Vec<Edge> = all.into_iter().filter(|e| !deleted.contains(e)).collect();
    g.with_edges(&keep)
}

/// Affected nodes farther from the anchors than a degree-free model of the
/// same depth could reach: beyond `K` hops for node requests, beyond `K-1`
/// for edge requests. Feature requests have none.
pub fn marginal_candidates(g: &Graph, request: &UnlearnRequest, affected: &NodeSet, layers: usize) -> NodeSet {
    let radius = match request.kind() {
        RequestKind::Node => layers,
        RequestKind::Edge => layers.saturating_sub(1),
        RequestKind::Feature => return NodeSet::new(),
    };
    let dist = hop_distances(g, request.anchor_nodes());
    affected
        .iter()
        .copied()
        .filter(|&v| dist[v].is_none_or(|d| d > radius))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginalOutcome {
    pub candidates: NodeSet,
    pub kept: NodeSet,
    /// `|ΔH(Â,A)_i|₂ − |ΔH(A′,A)_i|₂` per candidate.
    pub scores: BTreeMap<usize, f64>,
}

/// Keeps candidates whose row-norm margin exceeds `theta`.
pub fn filter_marginal(
    delta_removed: &Tensor,
    delta_random: &Tensor,
    candidates: &NodeSet,
    theta: f64,
) -> Result<MarginalOutcome> {
    if !(theta >= 0.0) {
        return Err(AguError::Config(format!("theta must be >= 0, got {theta}")));
    }
    let norm = |t: &Tensor, v: usize| t.row(v).iter().map(|x| x * x).sum::<f64>().sqrt();
    let scores: BTreeMap<usize, f64> = candidates
        .iter()
        .map(|&v| (v, norm(delta_removed, v) - norm(delta_random, v)))
        .collect();
    let kept = scores
        .iter()
        .filter(|(_, &s)| s > theta)
        .map(|(&v, _)| v)
        .collect();
    Ok(MarginalOutcome {
        candidates: candidates.clone(),
        kept,
        scores,
    })
}

/// Marginal-neighbor filtering for degree-normalized architectures.
pub fn marginal_filter(
    g: &Graph,
    delta: &GraphDelta,
    request: &UnlearnRequest,
    affected: &NodeSet,
    k: usize,
    theta: f64,
    seed: u64,
) -> Result<MarginalOutcome> {
    if !(theta >= 0.0) {
        return Err(AguError::Config(format!("theta must be >= 0, got {theta}")));
    }
    let candidates = marginal_candidates(g, request, affected, k);
    let a = normalized_adjacency(g, false);
    let a_hat = normalized_adjacency(&delta.remaining, false);
    let removed = propagation_delta(&a, &a_hat, g.features(), k)?;
    let perturbed = perturb_adjacency(g, &request.anchor_nodes(), &delta.removed_edges, k, seed)?;
    let a_prime = normalized_adjacency(&perturbed, false);
    let random = propagation_delta(&a, &a_prime, g.features(), k)?;
    filter_marginal(&removed, &random, &candidates, theta)
}

/// `1 − cos(a, b)`, exactly zero for identical rows.
fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    if a == b {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).max(0.0)
}

/// Top `⌈fraction · |pool|⌉` pool nodes by embedding cosine distance
/// between `before` and `after`; ties go to the smaller id.
pub fn select_top_affected(
    before: &Tensor,
    after: &Tensor,
    pool: &NodeSet,
    fraction: f64,
) -> Result<(NodeSet, BTreeMap<usize, f64>)> {
    if pool.is_empty() {
        return Err(AguError::EmptySet("select_top_affected pool"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(AguError::Config(format!("k_ans fraction {fraction} not in (0, 1]")));
    }
    before.same_shape(after, "select_top_affected")?;
    let scores: BTreeMap<usize, f64> = pool
        .iter()
        .map(|&v| (v, cosine_distance(after.row(v), before.row(v))))
        .collect();
    let mut ranked: Vec<(usize, f64)> = scores.iter().map(|(&v, &s)| (v, s)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let take = ((fraction * pool.len() as f64).ceil() as usize).clamp(1, pool.len());
    let chosen = ranked.iter().take(take).map(|&(v, _)| v).collect();
    Ok((chosen, scores))
}

/// Full pipeline: probe, marginal filtering where it applies, selection.
pub fn build_neighbor_report(
    f_g: &Model,
    g: &Graph,
    delta: &GraphDelta,
    request: &UnlearnRequest,
    cfg: &FilterConfig,
) -> Result<NeighborReport> {
    cfg.validate()?;
    let k = f_g.layers();
    let eligible = eligible_nodes(g, request);

    let a = normalized_adjacency(g, false);
    let a_hat = normalized_adjacency(&delta.remaining, false);
    let prop = propagation_delta_with(&a, &a_hat, g.features(), delta.remaining.features(), k)?;
    let n_aff = affected_by_propagation(&prop, &eligible, cfg.probe_tolerance);

    let probe = affected_by_probe(
        f_g.arch(),
        f_g.dims(),
        g,
        delta,
        &eligible,
        cfg.probe_seed,
        cfg.probe_tolerance,
    )?;
    let n_ac = probe.nodes;

    let (marginal, n_fmn, pool) = if f_g.arch().is_degree_based() && request.kind() != RequestKind::Feature {
        let mf = marginal_filter(
            g,
            delta,
            request,
            &n_ac,
            k,
            cfg.theta,
            seed::derive(cfg.probe_seed, "marginal"),
        )?;
        let pool: NodeSet = n_ac
            .iter()
            .copied()
            .filter(|v| !mf.candidates.contains(v) || mf.kept.contains(v))
            .collect();
        (mf.candidates, mf.kept, pool)
    } else {
        (NodeSet::new(), NodeSet::new(), n_ac.clone())
    };

    let (n_han, diff_scores) = if pool.is_empty() {
        (NodeSet::new(), BTreeMap::new())
    } else {
        let before = f_g.forward(g)?.embeddings;
        let after = f_g.forward(&delta.remaining)?.embeddings;
        select_top_affected(&before, &after, &pool, cfg.k_ans_fraction)?
    };

    Ok(NeighborReport {
        n_aff,
        n_ac,
        marginal,
        n_fmn,
        pool,
        n_han,
        diff_scores,
        probe_ambiguous: probe.ambiguous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> Graph {
        let edges: Vec<Edge> = (0..n - 1).map(|i| Edge::new(i, i + 1).unwrap()).collect();
        Graph::new(
            Tensor::identity(n),
            vec![0; n],
            1,
            &edges,
            vec![true; n],
            vec![false; n],
        )
        .unwrap()
    }

    fn cut_first_edge(g: &Graph) -> (UnlearnRequest, GraphDelta) {
        let r = UnlearnRequest::Edge([Edge::new(0, 1).unwrap()].into());
        let d = r.apply(g).unwrap();
        (r, d)
    }

    #[test]
    fn identical_adjacency_gives_zero_delta() {
        let g = chain(4);
        let a = normalized_adjacency(&g, false);
        let d = propagation_delta(&a, &a, g.features(), 2).unwrap();
        assert_eq!(d.max_abs(), 0.0);
        assert!(affected_by_propagation(&d, &(0..4).collect(), 1e-9).is_empty());
    }

    #[test]
    fn one_step_chain_delta_rows() {
        let g = chain(4);
        let (_, d) = cut_first_edge(&g);
        let a = normalized_adjacency(&g, false);
        let ah = normalized_adjacency(&d.remaining, false);
        let delta = propagation_delta(&a, &ah, g.features(), 1).unwrap();
        let rows = affected_by_propagation(&delta, &(0..4).collect(), 0.0);
        assert_eq!(rows, NodeSet::from([0, 1, 2]));
    }

    #[test]
    fn empty_effect_probe() {
        let g = chain(4);
        let d = GraphDelta {
            remaining: g.clone(),
            removed_edges: BTreeSet::new(),
            removed_nodes: NodeSet::new(),
            zeroed_feature_rows: NodeSet::new(),
        };
        let p = affected_by_probe(Arch::Gcn, &[4, 8, 2], &g, &d, &(0..4).collect(), 0, 1e-9).unwrap();
        assert!(p.nodes.is_empty());
        assert!(!p.ambiguous);
    }

    #[test]
    fn chain_probe_reaches_node_three_only_for_degree_based() {
        let g = chain(4);
        let (r, d) = cut_first_edge(&g);
        let elig = eligible_nodes(&g, &r);
        for arch in Arch::ALL {
            let p = affected_by_probe(arch, &[4, 16, 2], &g, &d, &elig, 1, 1e-9).unwrap();
            assert_eq!(p.nodes.contains(&3), arch.is_degree_based(), "{arch}");
        }
    }

    #[test]
    fn filter_threshold_limits() {
        let removed = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1e-3], vec![0.0, 0.0]]).unwrap();
        let zero = Tensor::zeros(3, 2);
        let cands = NodeSet::from([0, 1]);
        assert_eq!(filter_marginal(&removed, &zero, &cands, 0.0).unwrap().kept, cands);
        assert!(filter_marginal(&removed, &zero, &cands, f64::INFINITY).unwrap().kept.is_empty());
        assert!(matches!(
            filter_marginal(&removed, &zero, &cands, -1.0),
            Err(AguError::Config(_))
        ));
    }

    #[test]
    fn selection_ranks_and_breaks_ties() {
        let before = Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let after = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let pool = NodeSet::from([0, 1, 2, 3]);
        let (top, scores) = select_top_affected(&before, &after, &pool, 0.5).unwrap();
        assert_eq!(top, NodeSet::from([1, 3]));
        assert_eq!(scores[&0], 0.0);
        let (all, _) = select_top_affected(&before, &after, &pool, 1.0).unwrap();
        assert_eq!(all, pool);
        let (one, _) = select_top_affected(&before, &after, &pool, 0.25).unwrap();
        assert_eq!(one, NodeSet::from([1]));
        assert!(select_top_affected(&before, &after, &NodeSet::new(), 0.5).is_err());
    }

    #[test]
    fn perturbation_respects_protected_edges() {
        let g = chain(5);
        let protected: BTreeSet<Edge> = [Edge::new(0, 1).unwrap()].into();
        for s in 0..20 {
            let p = perturb_adjacency(&g, &NodeSet::from([0]), &protected, 2, s).unwrap();
            assert!(p.has_edge(0, 1));
            assert_eq!(p.num_edges(), 3);
            assert!(!p.has_edge(1, 2));
        }
        // No eligible edge in the ball: nothing removed.
        let p = perturb_adjacency(&g, &NodeSet::from([0]), &protected, 1, 0).unwrap();
        assert_eq!(p.num_edges(), 4);
    }
}
