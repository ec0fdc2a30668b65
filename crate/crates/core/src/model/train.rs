use serde::{Deserialize, Serialize};

use super::{Dropout, Model, Prepared};
use crate::error::{AguError, Result};
use crate::graph::Graph;
use crate::numeric::{cross_entropy, optimizer_step, AdamConfig, AdamState, Tape, Tensor, Var};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub seed: u64,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.01,
            epochs: 200,
            weight_decay: 5e-4,
            seed: 0,
            dropout: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(AguError::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(AguError::Config(format!("dropout must be in [0,1), got {}", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub loss_trace: Vec<f64>,
    pub train_accuracy: f64,
}

/// Minimizes cross entropy on the train mask with Adam.
pub fn train(model: &mut Model, g: &Graph, cfg: &TrainConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let rows = g.train_nodes();
    if rows.is_empty() {
        return Err(AguError::EmptySet("train mask"));
    }
    let prep = Prepared::new(model.arch(), g);
    let adam = AdamConfig::new(cfg.lr, cfg.weight_decay);
    let mut state = AdamState::new(model.params());
    let mut dropout = Dropout {
        rate: cfg.dropout,
        rng: seed::rng(seed::derive(cfg.seed, "dropout")),
    };
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = model.params().iter().map(|p| tape.param(p.clone())).collect();
        let out = model.forward_on(&tape, &vars, &prep, Some(&mut dropout))?;
        let loss = cross_entropy(out.logits, g.labels(), &rows)?;
        let value = loss.item()?;
        if !value.is_finite() {
            return Err(AguError::TrainingDiverged { epoch, loss: value });
        }
        trace.push(value);
        tape.backward(loss)?;
        let grads: Vec<Tensor> = vars
            .iter()
            .zip(model.params())
            .map(|(v, p)| v.grad().unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols())))
            .collect();
        optimizer_step(model.params_mut(), &grads, &mut state, &adam)?;
    }
    let pred = model.forward_prepared(&prep)?.logits.argmax_rows();
    let correct = rows.iter().filter(|&&v| pred[v] == g.labels()[v]).count();
    Ok(TrainReport {
        loss_trace: trace,
        train_accuracy: correct as f64 / rows.len() as f64,
    })
}
