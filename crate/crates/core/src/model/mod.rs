//! GCN, SGC, GAT, GIN and GraphSAGE with deterministic inference.

mod checkpoint;
mod train;

use std::fmt;
use std::rc::Rc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{AguError, Result};
use crate::graph::{mean_adjacency, normalized_adjacency, sum_adjacency, Graph};
use crate::numeric::{attention, SparseMatrix, Tape, Tensor, Var};
use crate::seed;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use train::{train, TrainConfig, TrainReport};

/// LeakyReLU slope inside GAT attention scores.
pub const GAT_SLOPE: f64 = 0.2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Gcn,
    Sgc,
    Gat,
    Gin,
    Sage,
}

impl Arch {
    pub const ALL: [Arch; 5] = [Arch::Gcn, Arch::Sgc, Arch::Gat, Arch::Gin, Arch::Sage];

    /// Aggregation weights depend on neighbor degrees.
    pub fn is_degree_based(self) -> bool {
        matches!(self, Arch::Gcn | Arch::Sgc)
    }

    pub fn tag(self) -> u8 {
        match self {
            Arch::Gcn => 0,
            Arch::Sgc => 1,
            Arch::Gat => 2,
            Arch::Gin => 3,
            Arch::Sage => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Arch> {
        Arch::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::Gcn => "gcn",
            Arch::Sgc => "sgc",
            Arch::Gat => "gat",
            Arch::Gin => "gin",
            Arch::Sage => "sage",
        })
    }
}

impl std::str::FromStr for Arch {
    type Err = AguError;

    fn from_str(s: &str) -> Result<Arch> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gcn" => Ok(Arch::Gcn),
            "sgc" => Ok(Arch::Sgc),
            "gat" => Ok(Arch::Gat),
            "gin" => Ok(Arch::Gin),
            "sage" | "graphsage" => Ok(Arch::Sage),
            other => Err(AguError::Config(format!(
                "unknown architecture {other:?} (gcn, sgc, gat, gin, sage)"
            ))),
        }
    }
}

/// `[d_in, 64, ..., C]` for `layers` message-passing layers.
pub fn default_dims(d_in: usize, num_classes: usize, layers: usize) -> Vec<usize> {
    let mut dims = vec![d_in];
    dims.extend(std::iter::repeat_n(64, layers.saturating_sub(1)));
    dims.push(num_classes);
    dims
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    arch: Arch,
    dims: Vec<usize>,
    seed: u64,
    names: Vec<String>,
    params: Vec<Tensor>,
}

/// Outputs of one deterministic forward pass.
#[derive(Clone, Debug)]
pub struct ForwardOutput {
    /// Representation fed to the classifier layer (the logits for SGC).
    pub embeddings: Tensor,
    pub logits: Tensor,
}

#[derive(Clone, Debug)]
pub struct Prediction {
    pub labels: Vec<usize>,
    pub probs: Tensor,
}

/// Taped outputs of a forward pass.
#[derive(Clone, Copy)]
pub struct ForwardVars<'t> {
    pub embeddings: Var<'t>,
    pub logits: Var<'t>,
}

/// Graph-dependent constants for one architecture.
#[derive(Clone, Debug)]
pub struct Prepared {
    matrix: Rc<SparseMatrix>,
    features: Tensor,
}

impl Prepared {
    pub fn new(arch: Arch, g: &Graph) -> Prepared {
        let matrix = match arch {
            Arch::Gcn | Arch::Sgc => normalized_adjacency(g, true),
            Arch::Gat | Arch::Gin => sum_adjacency(g, true),
            Arch::Sage => mean_adjacency(g),
        };
        Prepared {
            matrix: Rc::new(matrix),
            features: g.features().clone(),
        }
    }
}

/// Inverted dropout on the inputs of each layer during training.
pub struct Dropout {
    pub rate: f64,
    pub rng: seed::Rng,
}

impl Dropout {
    fn apply<'t>(&mut self, x: Var<'t>) -> Result<Var<'t>> {
        if self.rate <= 0.0 {
            return Ok(x);
        }
        let (r, c) = x.shape();
        let keep = 1.0 - self.rate;
        let mask: Vec<f64> = (0..r * c)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        x.mul(x.tape().constant(Tensor::from_vec(r, c, mask)?))
    }
}

fn glorot(rng: &mut seed::Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Tensor::from_vec(fan_in, fan_out, data).expect("sized by construction")
}

/// Fresh model with Glorot-uniform weights and zero biases.
pub fn init_model(arch: Arch, dims: &[usize], seed: u64) -> Result<Model> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(AguError::Config(format!(
            "dims must list at least input and output sizes, all positive; got {dims:?}"
        )));
    }
    let k = dims.len() - 1;
    let mut rng = seed::rng(seed);
    let mut names = Vec::new();
    let mut params = Vec::new();
    let mut push = |name: String, t: Tensor| {
        names.push(name);
        params.push(t);
    };
    match arch {
        Arch::Sgc => {
            push("w".into(), glorot(&mut rng, dims[0], dims[k]));
            push("b".into(), Tensor::zeros(1, dims[k]));
        }
        _ => {
            for l in 0..k {
                let (fi, fo) = (dims[l], dims[l + 1]);
                match arch {
                    Arch::Gcn => {
                        push(format!("w{l}"), glorot(&mut rng, fi, fo));
                    }
                    Arch::Gat => {
                        push(format!("w{l}"), glorot(&mut rng, fi, fo));
                        push(format!("att_src{l}"), glorot(&mut rng, fo, 1));
                        push(format!("att_dst{l}"), glorot(&mut rng, fo, 1));
                    }
                    Arch::Gin => {
                        push(format!("w{l}_1"), glorot(&mut rng, fi, fo));
                        push(format!("b{l}_1"), Tensor::zeros(1, fo));
                        push(format!("w{l}_2"), glorot(&mut rng, fo, fo));
                    }
                    Arch::Sage => {
                        push(format!("w{l}_self"), glorot(&mut rng, fi, fo));
                        push(format!("w{l}_nbr"), glorot(&mut rng, fi, fo));
                    }
                    Arch::Sgc => unreachable!(),
                }
                push(format!("b{l}"), Tensor::zeros(1, fo));
            }
        }
    }
    Ok(Model {
        arch,
        dims: dims.to_vec(),
        seed,
        names,
        params,
    })
}

impl Model {
    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn num_classes(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    /// Replaces parameters; shapes must match.
    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(AguError::dim("set_params", "parameter count changed"));
        }
        for (a, b) in self.params.iter().zip(&params) {
            a.same_shape(b, "set_params")?;
        }
        self.params = params;
        Ok(())
    }

    pub fn param_shapes(&self) -> Vec<(usize, usize)> {
        self.params.iter().map(Tensor::shape).collect()
    }

    /// SHA-256 over the architecture, dims and little-endian parameter bytes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update([self.arch.tag()]);
        for d in &self.dims {
            h.update((*d as u64).to_le_bytes());
        }
        for p in &self.params {
            for x in p.data() {
                h.update(x.to_le_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    fn check_input(&self, prep: &Prepared) -> Result<()> {
        if prep.features.cols() != self.dims[0] {
            return Err(AguError::dim(
                "forward",
                format!(
                    "graph has {} features, model expects {}",
                    prep.features.cols(),
                    self.dims[0]
                ),
            ));
        }
        Ok(())
    }

    /// Forward pass recorded on `tape` with `params` as the parameter vars.
    pub fn forward_on<'t>(
        &self,
        tape: &'t Tape,
        params: &[Var<'t>],
        prep: &Prepared,
        mut dropout: Option<&mut Dropout>,
    ) -> Result<ForwardVars<'t>> {
        self.check_input(prep)?;
        if params.len() != self.params.len() {
            return Err(AguError::dim("forward", "wrong number of parameter vars"));
        }
        let k = self.layers();
        let a = &prep.matrix;
        let mut drop = |x: Var<'t>| -> Result<Var<'t>> {
            match dropout.as_deref_mut() {
                Some(d) => d.apply(x),
                None => Ok(x),
            }
        };
        let x = tape.constant(prep.features.clone());

        if self.arch == Arch::Sgc {
            let mut z = x;
            for _ in 0..k {
                z = z.spmm_by(a)?;
            }
            let logits = drop(z)?.matmul(params[0])?.add_bias(params[1])?;
            return Ok(ForwardVars {
                embeddings: logits,
                logits,
            });
        }

        let mut h = x;
        let mut embeddings = x;
        let mut p = params.iter().copied();
        let mut next = || p.next().expect("parameter layout checked above");
        for l in 0..k {
            if l == k - 1 {
                embeddings = h;
            }
            let hin = drop(h)?;
            let out = match self.arch {
                Arch::Gcn => {
                    let w = next();
                    hin.matmul(w)?.spmm_by(a)?.add_bias(next())?
                }
                Arch::Gat => {
                    let (w, att_src, att_dst) = (next(), next(), next());
                    let hw = hin.matmul(w)?;
                    let src = hw.matmul(att_src)?;
                    let dst = hw.matmul(att_dst)?;
                    attention(a, dst, src, hw, GAT_SLOPE)?.add_bias(next())?
                }
                Arch::Gin => {
                    let (w1, b1, w2) = (next(), next(), next());
                    let agg = hin.spmm_by(a)?;
                    agg.matmul(w1)?.add_bias(b1)?.relu().matmul(w2)?.add_bias(next())?
                }
                Arch::Sage => {
                    let (ws, wn) = (next(), next());
                    let own = hin.matmul(ws)?;
                    let nbr = hin.spmm_by(a)?.matmul(wn)?;
                    own.add(nbr)?.add_bias(next())?
                }
                Arch::Sgc => unreachable!(),
            };
            h = if l + 1 < k { out.relu() } else { out };
        }
        Ok(ForwardVars {
            embeddings,
            logits: h,
        })
    }

    /// Deterministic inference on prepared graph constants.
    pub fn forward_prepared(&self, prep: &Prepared) -> Result<ForwardOutput> {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = self.params.iter().map(|p| tape.constant(p.clone())).collect();
        let out = self.forward_on(&tape, &vars, prep, None)?;
        Ok(ForwardOutput {
            embeddings: (*out.embeddings.value()).clone(),
            logits: (*out.logits.value()).clone(),
        })
    }

    /// Deterministic inference (no dropout).
    pub fn forward(&self, g: &Graph) -> Result<ForwardOutput> {
        self.forward_prepared(&Prepared::new(self.arch, g))
    }

    pub fn predict(&self, g: &Graph) -> Result<Prediction> {
        let out = self.forward(g)?;
        let tape = Tape::new();
        let probs = (*tape.constant(out.logits.clone()).row_softmax().value()).clone();
        Ok(Prediction {
            labels: out.logits.argmax_rows(),
            probs,
        })
    }
}
