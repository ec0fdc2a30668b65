//! Synthetic data, attacks, the retrain oracle and the comparison harness.

mod metrics;
mod sbm;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::micro_f1;
pub use sbm::{generate_sbm, SbmSpec, TRAIN_FRACTION};

use crate::error::{AguError, Result};
use crate::graph::{load_graph, Edge, Graph, NodeSet, RequestKind, UnlearnRequest};
use crate::model::{default_dims, init_model, train, Arch, Model, TrainConfig};
use crate::seed;
use crate::unlearn::{unlearn, Method, UnlearnConfig};

pub const SCHEMA_VERSION: u32 = 1;

fn count_for(ratio: f64, pool: usize) -> Result<usize> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(AguError::Config(format!("ratio must be in (0, 1), got {ratio}")));
    }
    Ok(((ratio * pool as f64).ceil() as usize).max(1))
}

/// Uniform sample without replacement of `⌈ratio · pool⌉` elements. Node
/// and feature requests draw from the train mask, edge requests from all
/// edges.
pub fn sample_unlearn_request(g: &Graph, kind: RequestKind, ratio: f64, seed: u64) -> Result<UnlearnRequest> {
    let mut rng = seed::rng(seed);
    match kind {
        RequestKind::Node | RequestKind::Feature => {
            let pool = g.train_nodes();
            if pool.is_empty() {
                return Err(AguError::EmptySet("train mask"));
            }
            let k = count_for(ratio, pool.len())?;
            let set: NodeSet = pool.choose_multiple(&mut rng, k).copied().collect();
            Ok(match kind {
                RequestKind::Node => UnlearnRequest::Node(set),
                _ => UnlearnRequest::Feature(set),
            })
        }
        RequestKind::Edge => {
            let pool = g.edges();
            if pool.is_empty() {
                return Err(AguError::EmptySet("edge set"));
            }
            let k = count_for(ratio, pool.len())?;
            Ok(UnlearnRequest::Edge(pool.choose_multiple(&mut rng, k).copied().collect()))
        }
    }
}

/// Injects `⌈ratio · |E|⌉` new edges between nodes of different labels.
pub fn edge_attack(g: &Graph, ratio: f64, seed: u64) -> Result<(Graph, UnlearnRequest)> {
    if !(ratio > 0.0) {
        return Err(AguError::Config(format!("attack ratio must be positive, got {ratio}")));
    }
    let want = (ratio * g.num_edges() as f64).ceil() as usize;
    if want == 0 {
        return Err(AguError::Config("attack ratio times edge count is below one edge".into()));
    }
    let n = g.num_nodes();
    let labels = g.labels();
    let mut per_class = vec![0usize; g.num_classes()];
    labels.iter().for_each(|&l| per_class[l] += 1);
    if per_class.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(AguError::AttackImpossible("every node has the same label".into()));
    }
    let cross_pairs = (n * n - per_class.iter().map(|c| c * c).sum::<usize>()) / 2;
    let cross_edges = g.edges().iter().filter(|e| labels[e.lo()] != labels[e.hi()]).count();
    if cross_pairs - cross_edges < want {
        return Err(AguError::AttackImpossible(format!(
            "{want} edges requested but only {} cross-label non-edges exist",
            cross_pairs - cross_edges
        )));
    }
    let mut rng = seed::rng(seed);
    let mut injected = BTreeSet::new();
    while injected.len() < want {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if labels[u] == labels[v] || g.has_edge(u, v) {
            continue;
        }
        injected.insert(Edge::new(u, v)?);
    }
    let mut all = g.edges();
    all.extend(injected.iter().copied());
    Ok((g.with_edges(&all)?, UnlearnRequest::Edge(injected)))
}

/// Fresh model initialized from `cfg.seed` and trained on `g`.
pub fn fit(arch: Arch, dims: &[usize], g: &Graph, cfg: &TrainConfig) -> Result<Model> {
    let mut m = init_model(arch, dims, cfg.seed)?;
    train(&mut m, g, cfg)?;
    Ok(m)
}

/// The model trained from scratch on the remaining graph.
pub fn retrain_oracle(g: &Graph, request: &UnlearnRequest, arch: Arch, dims: &[usize], cfg: &TrainConfig) -> Result<Model> {
    fit(arch, dims, &request.apply(g)?.remaining, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    Agu,
    Retrain,
    ReverseCe,
    DecBaseline,
    Vanilla,
}

impl BenchMethod {
    pub fn name(self) -> &'static str {
        match self {
            BenchMethod::Agu => "agu",
            BenchMethod::Retrain => "retrain",
            BenchMethod::ReverseCe => "reverse_ce",
            BenchMethod::DecBaseline => "dec_baseline",
            BenchMethod::Vanilla => "vanilla",
        }
    }

    fn unlearn_method(self) -> Option<Method> {
        match self {
            BenchMethod::Agu => Some(Method::Agu),
            BenchMethod::ReverseCe => Some(Method::ReverseCe),
            BenchMethod::DecBaseline => Some(Method::DecBaseline),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dataset {
    Sbm(SbmSpec),
    Files { graph: PathBuf, masks: Option<PathBuf> },
}

fn default_trials() -> usize {
    10
}

fn default_layers() -> usize {
    2
}

fn default_hidden() -> usize {
    64
}

fn default_methods() -> Vec<BenchMethod> {
    vec![BenchMethod::Agu, BenchMethod::Retrain, BenchMethod::ReverseCe, BenchMethod::Vanilla]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: Dataset,
    pub archs: Vec<Arch>,
    pub task: RequestKind,
    #[serde(default = "default_ratio")]
    pub unlearn_ratio: f64,
    /// When set, the request is the set of injected adversarial edges.
    #[serde(default)]
    pub attack_ratio: Option<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Trial seeds; defaults to `0..trials`.
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default = "default_methods")]
    pub methods: Vec<BenchMethod>,
    #[serde(default = "default_layers")]
    pub layers: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub unlearn: UnlearnConfig,
}

fn default_ratio() -> f64 {
    0.05
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(AguError::Config("trial count must be >= 1".into()));
        }
        if let Some(s) = &self.seeds {
            if s.len() != self.trials {
                return Err(AguError::Config(format!("{} seeds for {} trials", s.len(), self.trials)));
            }
        }
        if self.archs.is_empty() || self.methods.is_empty() {
            return Err(AguError::Config("need at least one architecture and one method".into()));
        }
        if !(self.unlearn_ratio > 0.0 && self.unlearn_ratio < 1.0) {
            return Err(AguError::Config(format!("unlearn ratio {} not in (0, 1)", self.unlearn_ratio)));
        }
        if let Some(r) = self.attack_ratio {
            if !(r > 0.0 && r < 1.0) {
                return Err(AguError::Config(format!("attack ratio {r} not in (0, 1)")));
            }
            if self.task != RequestKind::Edge {
                return Err(AguError::Config("edge attacks need task = edge".into()));
            }
        }
        if self.layers == 0 || self.hidden == 0 {
            return Err(AguError::Config("layers and hidden must be positive".into()));
        }
        self.train.validate()?;
        self.unlearn.validate()
    }

    pub fn trial_seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| (0..self.trials as u64).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub arch: Arch,
    pub method: BenchMethod,
    pub trial: usize,
    pub seed: u64,
    pub f1: f64,
    pub epochs: usize,
    pub time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub arch: Arch,
    pub method: BenchMethod,
    pub trials: usize,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub mean_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub spec: ExperimentSpec,
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
}

impl EvalReport {
    pub fn aggregate(&self, arch: Arch, method: BenchMethod) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.arch == arch && a.method == method)
    }

    pub fn records_for(&self, arch: Arch, method: BenchMethod) -> Vec<&TrialRecord> {
        self.records.iter().filter(|r| r.arch == arch && r.method == method).collect()
    }

    /// `method,trial,f1,time_ms` rows; the architecture is folded into the
    /// method column when more than one was run.
    pub fn to_csv(&self) -> String {
        let multi = self.spec.archs.len() > 1;
        let mut out = String::from("method,trial,f1,time_ms\n");
        for r in &self.records {
            let name = if multi {
                format!("{}:{}", r.arch, r.method.name())
            } else {
                r.method.name().to_string()
            };
            out.push_str(&format!("{},{},{},{:.3}\n", name, r.trial, r.f1, r.time_ms));
        }
        out
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn trial_graph(spec: &ExperimentSpec, trial_seed: u64) -> Result<Graph> {
    match &spec.dataset {
        Dataset::Sbm(s) => generate_sbm(&SbmSpec {
            seed: seed::derive_indexed(s.seed, "sbm", trial_seed),
            ..s.clone()
        }),
        Dataset::Files { graph, masks } => load_graph(graph, masks.as_deref()),
    }
}

fn test_f1(m: &Model, g: &Graph) -> Result<f64> {
    micro_f1(&m.predict(g)?.labels, g.labels(), g.test_mask())
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn run_trial(spec: &ExperimentSpec, arch: Arch, trial: usize, trial_seed: u64) -> Result<Vec<TrialRecord>> {
    let clean = trial_graph(spec, trial_seed)?;
    let dims = default_dims(clean.num_features(), clean.num_classes(), spec.layers)
        .into_iter()
        .enumerate()
        .map(|(i, d)| if i == 0 || i == spec.layers { d } else { spec.hidden })
        .collect::<Vec<_>>();
    let tcfg = TrainConfig {
        seed: seed::derive(trial_seed, "train"),
        ..spec.train.clone()
    };

    let (g, request) = match spec.attack_ratio {
        Some(r) => edge_attack(&clean, r, seed::derive(trial_seed, "attack"))?,
        None => {
            let r = sample_unlearn_request(&clean, spec.task, spec.unlearn_ratio, seed::derive(trial_seed, "request"))?;
            (clean, r)
        }
    };
    let remaining = request.apply(&g)?.remaining;
    let f_g = fit(arch, &dims, &g, &tcfg)?;

    let record = |method, f1, epochs, time_ms| TrialRecord {
        arch,
        method,
        trial,
        seed: trial_seed,
        f1,
        epochs,
        time_ms,
    };
    let mut out = Vec::new();
    for &method in &spec.methods {
        let rec = match method {
            BenchMethod::Vanilla => {
                // The attacked model is judged on the graph it was trained on.
                let eval_on = if spec.attack_ratio.is_some() { &g } else { &remaining };
                record(method, test_f1(&f_g, eval_on)?, 0, 0.0)
            }
            BenchMethod::Retrain => {
                let t = Instant::now();
                let m = fit(arch, &dims, &remaining, &tcfg)?;
                let time = ms(t);
                record(method, test_f1(&m, &remaining)?, tcfg.epochs, time)
            }
            _ => {
                let m = method.unlearn_method().expect("unlearning methods handled here");
                let ucfg = UnlearnConfig {
                    seed: seed::derive(trial_seed, "unlearn"),
                    method: m,
                    filter: crate::neighbors::FilterConfig {
                        probe_seed: seed::derive(trial_seed, "probe"),
                        ..spec.unlearn.filter.clone()
                    },
                    ..spec.unlearn.clone()
                };
                let o = unlearn(&f_g, &g, &request, &ucfg)?;
                let time = o.wall_time.as_secs_f64() * 1e3;
                record(method, test_f1(&o.model, &remaining)?, ucfg.epochs, time)
            }
        };
        out.push(rec);
    }
    Ok(out)
}

/// Runs every (architecture, trial) pair on `jobs` threads and aggregates.
pub fn run_experiment(spec: &ExperimentSpec, jobs: usize) -> Result<EvalReport> {
    spec.validate()?;
    let seeds = spec.trial_seeds();
    let work: Vec<(Arch, usize, u64)> = spec
        .archs
        .iter()
        .flat_map(|&a| seeds.iter().enumerate().map(move |(i, &s)| (a, i, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| AguError::Config(format!("thread pool: {e}")))?;
    let results: Vec<Result<Vec<TrialRecord>>> =
        pool.install(|| work.par_iter().map(|&(a, i, s)| run_trial(spec, a, i, s)).collect());
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    records.sort_by_key(|a| (a.arch.tag(), a.method, a.seed, a.trial));

    let mut aggregates = Vec::new();
    for &arch in &spec.archs {
        for &method in &spec.methods {
            let rs: Vec<&TrialRecord> = records.iter().filter(|r| r.arch == arch && r.method == method).collect();
            let f1: Vec<f64> = rs.iter().map(|r| r.f1).collect();
            let t: Vec<f64> = rs.iter().map(|r| r.time_ms).collect();
            let (f1_mean, f1_std) = mean_std(&f1);
            aggregates.push(Aggregate {
                arch,
                method,
                trials: rs.len(),
                f1_mean,
                f1_std,
                mean_time_ms: mean_std(&t).0,
            });
        }
    }
    Ok(EvalReport {
        schema_version: SCHEMA_VERSION,
        spec: spec.clone(),
        records,
        aggregates,
    })
}
