use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{AguError, Result};
use crate::graph::{Edge, Graph};
use crate::numeric::Tensor;
use crate::seed;

/// Planted-partition graph parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmSpec {
    pub n: usize,
    pub blocks: usize,
    pub p_in: f64,
    pub p_out: f64,
    /// Feature dimension, at least `blocks`.
    pub d: usize,
    /// Signal added to the block's feature column.
    pub s: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Fraction of nodes placed in the train mask.
pub const TRAIN_FRACTION: f64 = 0.8;

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AguError::Config(m));
        if self.blocks == 0 || self.n == 0 || !self.n.is_multiple_of(self.blocks) {
            return bad(format!("n = {} must be a positive multiple of blocks = {}", self.n, self.blocks));
        }
        if !(0.0..=1.0).contains(&self.p_in) || !(0.0..=1.0).contains(&self.p_out) {
            return bad("edge probabilities must lie in [0, 1]".into());
        }
        if !(self.p_in > self.p_out) {
            return bad(format!("p_in = {} must exceed p_out = {}", self.p_in, self.p_out));
        }
        if self.d < self.blocks {
            return bad(format!("feature dim {} is smaller than blocks {}", self.d, self.blocks));
        }
        if !self.s.is_finite() {
            return bad("signal strength must be finite".into());
        }
        Ok(())
    }

    /// Parses `n=..,c=..,pin=..,pout=..,d=..,s=..[,seed=..]`.
    pub fn parse(text: &str, seed: u64) -> Result<SbmSpec> {
        let mut spec = SbmSpec {
            n: 0,
            blocks: 0,
            p_in: f64::NAN,
            p_out: f64::NAN,
            d: 0,
            s: f64::NAN,
            seed,
        };
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| AguError::Config(format!("expected key=value, got {part:?}")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| AguError::Config(format!("bad number for {k}: {v:?}")));
            let int = |v: &str| v.parse::<usize>().map_err(|_| AguError::Config(format!("bad integer for {k}: {v:?}")));
            match k {
                "n" => spec.n = int(v)?,
                "c" => spec.blocks = int(v)?,
                "pin" => spec.p_in = num(v)?,
                "pout" => spec.p_out = num(v)?,
                "d" => spec.d = int(v)?,
                "s" => spec.s = num(v)?,
                "seed" => spec.seed = v.parse().map_err(|_| AguError::Config(format!("bad seed {v:?}")))?,
                _ => return Err(AguError::Config(format!("unknown SBM key {k:?} (n, c, pin, pout, d, s, seed)"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Node `v` belongs to block `v / (n / blocks)`. Features are the scaled
/// one-hot block indicator plus uniform `[0, 1)` noise.
pub fn generate_sbm(spec: &SbmSpec) -> Result<Graph> {
    spec.validate()?;
    let n = spec.n;
    let size = n / spec.blocks;
    let labels: Vec<usize> = (0..n).map(|v| v / size).collect();

    let mut rng = seed::rng(seed::derive(spec.seed, "edges"));
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { spec.p_in } else { spec.p_out };
            if rng.gen::<f64>() < p {
                edges.push(Edge::new(u, v)?);
            }
        }
    }

    let mut rng = seed::rng(seed::derive(spec.seed, "features"));
    let mut x = Tensor::zeros(n, spec.d);
    for v in 0..n {
        for c in 0..spec.d {
            x.set(v, c, rng.gen::<f64>());
        }
        x.set(v, labels[v], x.get(v, labels[v]) + spec.s);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed::rng(seed::derive(spec.seed, "split")));
    let n_train = (TRAIN_FRACTION * n as f64).round() as usize;
    let mut train = vec![false; n];
    for &v in &order[..n_train] {
        train[v] = true;
    }
    let test = train.iter().map(|t| !t).collect();
    Graph::new(x, labels, spec.blocks, &edges, train, test)
}
