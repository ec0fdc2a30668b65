//! Fine-tuning a trained model so that it forgets nodes, edges or features.

mod loss;

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use loss::{
    candidate_sets, edge_consistency, edge_free_distribution, homophily_pairs, loss_an, loss_dec_baseline, loss_eu,
    loss_fu, loss_nu, random_pairs, reverse_ce_baseline, Pairs,
};

use crate::error::{AguError, Result};
use crate::graph::{Edge, Graph, GraphDelta, RequestKind, UnlearnRequest};
use crate::model::{Model, Prepared};
use crate::neighbors::{build_neighbor_report, FilterConfig, NeighborReport};
use crate::numeric::{optimizer_step, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::seed;

/// Which objective drives the fine-tuning.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Task-specific term plus the affected-neighbor term.
    #[default]
    Agu,
    /// As `Agu`, but deleted edges are compared with random pairs.
    DecBaseline,
    /// Gradient ascent on the unlearning elements only.
    ReverseCe,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Agu => "agu",
            Method::DecBaseline => "dec_baseline",
            Method::ReverseCe => "reverse_ce",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UnlearnConfig {
    pub alpha: f64,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub kl_cap: f64,
    pub seed: u64,
    pub method: Method,
    pub filter: FilterConfig,
}

impl Default for UnlearnConfig {
    fn default() -> Self {
        UnlearnConfig {
            alpha: 0.1,
            epochs: 25,
            lr: 0.01,
            weight_decay: 5e-4,
            kl_cap: 10.0,
            seed: 0,
            method: Method::Agu,
            filter: FilterConfig::default(),
        }
    }
}

impl UnlearnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(AguError::Config(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(1..=1000).contains(&self.epochs) {
            return Err(AguError::Config(format!("epochs must be in [1, 1000], got {}", self.epochs)));
        }
        if !(self.lr > 0.0) {
            return Err(AguError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.kl_cap > 0.0) {
            return Err(AguError::Config(format!("kl_cap must be positive, got {}", self.kl_cap)));
        }
        self.filter.validate()
    }
}

/// Per-epoch loss values, recorded before each optimizer step.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossTrace {
    /// Task-specific term (or the reverse cross entropy).
    pub ef: Vec<f64>,
    /// Affected-neighbor term; zeros when it does not apply.
    pub an: Vec<f64>,
    pub total: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct UnlearnOutcome {
    pub model: Model,
    pub trace: LossTrace,
    pub wall_time: Duration,
    /// Absent for the reverse cross entropy baseline.
    pub report: Option<NeighborReport>,
    pub delta: GraphDelta,
}

/// Quantities taken from the original model once, before fine-tuning.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenReference {
    pub embeddings: Tensor,
    pub pseudo_labels: Vec<usize>,
    /// Edge-free predictions; only built for node and feature requests.
    pub edge_free: Option<Tensor>,
}

impl FrozenReference {
    pub fn new(f_g: &Model, g: &Graph, kind: RequestKind) -> Result<FrozenReference> {
        let out = f_g.forward(g)?;
        let edge_free = match kind {
            RequestKind::Edge => None,
            _ => Some(edge_free_distribution(f_g, g)?),
        };
        Ok(FrozenReference {
            pseudo_labels: out.logits.argmax_rows(),
            embeddings: out.embeddings,
            edge_free,
        })
    }
}

enum EdgeMode {
    Homophily(Vec<Option<Vec<usize>>>),
    Random,
}

fn check_term(epoch: usize, term: &'static str, v: Var<'_>) -> Result<f64> {
    let value = v.item()?;
    if !value.is_finite() {
        return Err(AguError::UnlearnDiverged { epoch, term, value });
    }
    Ok(value)
}

/// Runs `cfg.epochs` Adam steps on a copy of `f_g`.
pub fn unlearn(f_g: &Model, g: &Graph, request: &UnlearnRequest, cfg: &UnlearnConfig) -> Result<UnlearnOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let delta = request.apply(g)?;
    let kind = request.kind();
    let frozen = FrozenReference::new(f_g, g, kind)?;

    let report = match cfg.method {
        Method::ReverseCe => None,
        _ => Some(build_neighbor_report(f_g, g, &delta, request, &cfg.filter)?),
    };
    let han: Vec<usize> = report.as_ref().map_or_else(Vec::new, |r| r.n_han.iter().copied().collect());

    let edges: Vec<Edge> = match request {
        UnlearnRequest::Edge(s) => s.iter().copied().collect(),
        UnlearnRequest::Node(_) => delta.removed_edges.iter().copied().collect(),
        UnlearnRequest::Feature(_) => Vec::new(),
    };
    let element_rows: Vec<usize> = match cfg.method {
        Method::ReverseCe => request.anchor_nodes().into_iter().collect(),
        _ => request.element_nodes().into_iter().collect(),
    };
    if !loss::disjoint(&request.element_nodes(), &han) {
        return Err(AguError::Contract("affected-neighbor rows overlap the unlearning elements".into()));
    }
    let edge_mode = match cfg.method {
        Method::Agu => EdgeMode::Homophily(candidate_sets(g, &edges, f_g.layers())),
        _ => EdgeMode::Random,
    };

    let mut model = f_g.clone();
    let prep = Prepared::new(model.arch(), &delta.remaining);
    let adam = AdamConfig::new(cfg.lr, cfg.weight_decay);
    let mut state = AdamState::new(model.params());
    let mut trace = LossTrace::default();

    for epoch in 0..cfg.epochs {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = model.params().iter().map(|p| tape.param(p.clone())).collect();
        let out = model.forward_on(&tape, &vars, &prep, None)?;
        let mut rng = seed::rng(seed::derive_indexed(cfg.seed, "pairs", epoch as u64));

        let edge_term = |rng: &mut seed::Rng| -> Result<Option<Var<'_>>> {
            if edges.is_empty() {
                return Ok(None);
            }
            let t = match &edge_mode {
                EdgeMode::Homophily(c) => loss_eu(out.embeddings, &frozen.embeddings, &edges, c, rng)?,
                EdgeMode::Random => loss_dec_baseline(out.embeddings, &frozen.embeddings, &edges, rng)?,
            };
            Ok(Some(t))
        };
        let feature_term = || -> Result<Var<'_>> {
            let y = frozen.edge_free.as_ref().expect("built for node and feature requests");
            loss_fu(out.logits.row_softmax(), y, &element_rows, cfg.kl_cap)
        };

        let (ef, an) = match cfg.method {
            Method::ReverseCe => (
                reverse_ce_baseline(out.logits, &frozen.pseudo_labels, &element_rows, cfg.kl_cap)?,
                None,
            ),
            _ => {
                let ef = match kind {
                    RequestKind::Edge => edge_term(&mut rng)?.expect("edge requests are nonempty"),
                    RequestKind::Feature => feature_term()?,
                    RequestKind::Node => loss_nu(edge_term(&mut rng)?, feature_term()?, cfg.alpha)?,
                };
                let an = loss_an(out.logits, &frozen.pseudo_labels, &han, cfg.kl_cap)?;
                (ef, Some(an))
            }
        };

        let ef_value = check_term(epoch, "ef", ef)?;
        let (total, an_value) = match an {
            Some(an) => (ef.add(an)?, check_term(epoch, "an", an)?),
            None => (ef, 0.0),
        };
        let total_value = check_term(epoch, "total", total)?;
        trace.ef.push(ef_value);
        trace.an.push(an_value);
        trace.total.push(total_value);

        tape.backward(total)?;
        let grads: Vec<Tensor> = vars
            .iter()
            .zip(model.params())
            .map(|(v, p)| v.grad().unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
            .collect();
        optimizer_step(model.params_mut(), &grads, &mut state, &adam)?;
    }

    Ok(UnlearnOutcome {
        model,
        trace,
        wall_time: start.elapsed(),
        report,
        delta,
    })
}
