//! Unlearning objectives.
//!
//! Every function takes the taped outputs of the model being fine-tuned
//! (`f̂` on the remaining graph) and plain tensors computed once from the
//! frozen original model (`f_g` on the original graph).

use rand::Rng as _;

use crate::error::{AguError, Result};
use crate::graph::{candidate_pairs, Edge, Graph, IsolatedPair, NodeSet};
use crate::model::Model;
use crate::numeric::{mse, Tensor, Var};
use crate::seed::Rng;

/// Comparison pairs for the edge objective, one per deleted edge.
pub type Pairs = Vec<(usize, usize)>;

/// `n` pairs drawn uniformly from all `num_nodes` nodes.
pub fn random_pairs(num_nodes: usize, n: usize, rng: &mut Rng) -> Pairs {
    (0..n)
        .map(|_| (rng.gen_range(0..num_nodes), rng.gen_range(0..num_nodes)))
        .collect()
}

/// Per-edge candidate universes for [`homophily_pairs`].
pub fn candidate_sets(g: &Graph, edges: &[Edge], k: usize) -> Vec<Option<Vec<usize>>> {
    edges
        .iter()
        .map(|e| match candidate_pairs(g, e.lo(), e.hi(), k) {
            Ok(set) => Some(set.into_iter().collect()),
            Err(IsolatedPair) => None,
        })
        .collect()
}

/// One pair per edge, both ends drawn uniformly with replacement from the
/// edge's candidate set; edges without one fall back to random nodes.
pub fn homophily_pairs(candidates: &[Option<Vec<usize>>], num_nodes: usize, rng: &mut Rng) -> Pairs {
    candidates
        .iter()
        .map(|c| match c {
            Some(set) => (set[rng.gen_range(0..set.len())], set[rng.gen_range(0..set.len())]),
            None => (rng.gen_range(0..num_nodes), rng.gen_range(0..num_nodes)),
        })
        .collect()
}

/// MSE between the mean of `[ĥ_u ‖ ĥ_v]` over deleted edges and the mean
/// of `[h_p ‖ h_q]` over comparison pairs taken from the frozen embeddings.
pub fn edge_consistency<'t>(emb_hat: Var<'t>, frozen: &Tensor, edges: &[Edge], pairs: &[(usize, usize)]) -> Result<Var<'t>> {
    if edges.is_empty() {
        return Err(AguError::Contract("edge objective needs at least one deleted edge".into()));
    }
    if pairs.len() != edges.len() {
        return Err(AguError::Contract(format!(
            "{} comparison pairs for {} deleted edges",
            pairs.len(),
            edges.len()
        )));
    }
    let us: Vec<usize> = edges.iter().map(|e| e.lo()).collect();
    let vs: Vec<usize> = edges.iter().map(|e| e.hi()).collect();
    let deleted = emb_hat.gather_rows(&us)?.concat_cols(emb_hat.gather_rows(&vs)?)?.mean_rows()?;

    let c = frozen.cols();
    let mut pooled = Tensor::zeros(1, 2 * c);
    for &(p, q) in pairs {
        for (o, x) in pooled.data_mut().iter_mut().zip(frozen.row(p).iter().chain(frozen.row(q))) {
            *o += x;
        }
    }
    let n = pairs.len() as f64;
    pooled.data_mut().iter_mut().for_each(|x| *x /= n);
    mse(deleted, emb_hat.tape().constant(pooled))
}

/// Deleted-edge consistency against uniformly random pairs.
pub fn loss_dec_baseline<'t>(
    emb_hat: Var<'t>,
    frozen: &Tensor,
    edges: &[Edge],
    rng: &mut Rng,
) -> Result<Var<'t>> {
    let pairs = random_pairs(frozen.rows(), edges.len(), rng);
    edge_consistency(emb_hat, frozen, edges, &pairs)
}

/// Deleted-edge consistency against pairs from each edge's k-hop
/// neighborhood in the original graph.
pub fn loss_eu<'t>(
    emb_hat: Var<'t>,
    frozen: &Tensor,
    edges: &[Edge],
    candidates: &[Option<Vec<usize>>],
    rng: &mut Rng,
) -> Result<Var<'t>> {
    if candidates.len() != edges.len() {
        return Err(AguError::Contract("one candidate set per deleted edge required".into()));
    }
    let pairs = homophily_pairs(candidates, frozen.rows(), rng);
    edge_consistency(emb_hat, frozen, edges, &pairs)
}

/// Softmax outputs of `f_g` with every edge removed.
pub fn edge_free_distribution(f_g: &Model, g: &Graph) -> Result<Tensor> {
    Ok(f_g.predict(&g.edgeless())?.probs)
}

/// `−mean_u min(KL(y′_u ‖ ŷ_u), cap)` over `nodes`.
pub fn loss_fu<'t>(probs_hat: Var<'t>, y_prime: &Tensor, nodes: &[usize], cap: f64) -> Result<Var<'t>> {
    if nodes.is_empty() {
        return Err(AguError::Contract("feature objective needs at least one node".into()));
    }
    Ok(probs_hat.kl_rows_from(y_prime, nodes)?.clamp_max(cap).mean()?.scale(-1.0))
}

/// `α · edge term + feature term`; the edge term is skipped when the
/// deleted nodes had no edges.
pub fn loss_nu<'t>(edge_term: Option<Var<'t>>, feature_term: Var<'t>, alpha: f64) -> Result<Var<'t>> {
    match edge_term {
        Some(e) => e.scale(alpha).add(feature_term),
        None => Ok(feature_term),
    }
}

/// Cross entropy against frozen pseudo-labels on `nodes`, each row capped
/// at `cap`; zero for an empty node set.
pub fn loss_an<'t>(logits_hat: Var<'t>, pseudo: &[usize], nodes: &[usize], cap: f64) -> Result<Var<'t>> {
    if nodes.is_empty() {
        return Ok(logits_hat.tape().constant(Tensor::scalar(0.0)));
    }
    logits_hat.cross_entropy_rows(pseudo, nodes)?.clamp_max(cap).mean()
}

/// Negated, per-row capped cross entropy against frozen pseudo-labels.
pub fn reverse_ce_baseline<'t>(logits_hat: Var<'t>, pseudo: &[usize], nodes: &[usize], cap: f64) -> Result<Var<'t>> {
    if nodes.is_empty() {
        return Err(AguError::Contract("reverse cross entropy needs at least one node".into()));
    }
    Ok(logits_hat.cross_entropy_rows(pseudo, nodes)?.clamp_max(cap).mean()?.scale(-1.0))
}

/// Row disjointness of two loss masks.
pub(crate) fn disjoint(a: &NodeSet, b: &[usize]) -> bool {
    b.iter().all(|v| !a.contains(v))
}
