//! Reverse-mode differentiation over dense [`Tensor`] values.
//!
//! A [`Tape`] is an append-only arena of nodes. Every op pushes one node
//! whose inputs already exist, so node indices are a topological order and
//! backward simply walks them in reverse. Leaves created with
//! [`Tape::param`] receive gradients; leaves created with [`Tape::constant`]
//! do not, and neither do ops whose inputs are all constant.
//!
//! ```
//! use agu::numeric::{Tape, Tensor};
//!
//! let tape = Tape::new();
//! let w = tape.param(Tensor::from_vec(1, 2, vec![1.0, 2.0]).unwrap());
//! let loss = w.mul(w).unwrap().sum();
//! tape.backward(loss).unwrap();
//! assert_eq!(w.grad().unwrap().data(), &[2.0, 4.0]);
//! ```

use std::cell::RefCell;
use std::rc::Rc;

use crate::error::{AguError, Result};
use crate::numeric::{SparseMatrix, Tensor};

/// Floor applied to the second argument of the KL divergence.
pub const KL_FLOOR: f64 = 1e-10;

#[derive(Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    SpMM(Rc<SparseMatrix>, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddBias(usize, usize),
    Scale(usize, f64),
    Relu(usize),
    LeakyRelu(usize, f64),
    Exp(usize),
    Log(usize),
    ConcatCols(usize, usize),
    GatherRows(usize, Rc<[usize]>),
    RowSoftmax(usize),
    RowLogSoftmax(usize),
    Sum(usize),
    MeanRows(usize),
    ClampMax(usize, f64),
    CrossEntropyRows {
        logits: usize,
        labels: Rc<[usize]>,
        rows: Rc<[usize]>,
    },
    KlRows {
        target: Rc<Tensor>,
        q: usize,
        rows: Rc<[usize]>,
    },
    Attention {
        pattern: Rc<SparseMatrix>,
        dst: usize,
        src: usize,
        values: usize,
        slope: f64,
    },
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

/// Append-only record of a computation.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    idx: usize,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Leaf that receives a gradient.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false)
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
            grad: None,
        });
        Var {
            tape: self,
            idx: nodes.len() - 1,
        }
    }

    fn value(&self, idx: usize) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[idx].value)
    }

    fn requires_grad(&self, idx: usize) -> bool {
        self.nodes.borrow()[idx].requires_grad
    }

    fn derived(&self, value: Tensor, op: Op, inputs: &[usize]) -> Var<'_> {
        let rg = inputs.iter().any(|&i| self.requires_grad(i));
        self.push(value, op, rg)
    }

    /// Clears accumulated gradients on every leaf.
    pub fn zero_grad(&self) {
        for n in self.nodes.borrow_mut().iter_mut() {
            n.grad = None;
        }
    }

    /// Propagates `d root / d leaf` into every gradient-carrying leaf.
    /// Gradients accumulate across calls until [`Tape::zero_grad`].
    pub fn backward(&self, root: Var<'_>) -> Result<()> {
        if !std::ptr::eq(root.tape, self) {
            return Err(AguError::Contract("backward root belongs to another tape".into()));
        }
        let root_shape = self.value(root.idx).shape();
        if root_shape != (1, 1) {
            return Err(AguError::Contract(format!(
                "backward needs a scalar root, got {}x{}",
                root_shape.0, root_shape.1
            )));
        }
        let mut leaf_grads: Vec<(usize, Tensor)> = Vec::new();
        {
            let nodes = self.nodes.borrow();
            let mut adj: Vec<Option<Tensor>> = vec![None; root.idx + 1];
            adj[root.idx] = Some(Tensor::scalar(1.0));
            for i in (0..=root.idx).rev() {
                let Some(g) = adj[i].take() else { continue };
                let node = &nodes[i];
                if !node.requires_grad {
                    continue;
                }
                let mut emit = |j: usize, t: Tensor| {
                    if !nodes[j].requires_grad {
                        return;
                    }
                    match &mut adj[j] {
                        Some(acc) => acc.add_assign(&t),
                        slot => *slot = Some(t),
                    }
                };
                let val = |j: usize| -> &Tensor { &nodes[j].value };
                match &node.op {
                    Op::Leaf => leaf_grads.push((i, g)),
                    Op::MatMul(a, b) => {
                        emit(*a, g.matmul(&val(*b).transpose())?);
                        emit(*b, val(*a).transpose().matmul(&g)?);
                    }
                    Op::SpMM(s, d) => emit(*d, s.spmm_transposed(&g)?),
                    Op::Add(a, b) => {
                        emit(*a, g.clone());
                        emit(*b, g);
                    }
                    Op::Sub(a, b) => {
                        emit(*a, g.clone());
                        emit(*b, g.map(|x| -x));
                    }
                    Op::Mul(a, b) => {
                        emit(*a, g.zip_map(val(*b), |x, y| x * y));
                        emit(*b, g.zip_map(val(*a), |x, y| x * y));
                    }
                    Op::AddBias(a, b) => {
                        let mut db = Tensor::zeros(1, g.cols());
                        for r in 0..g.rows() {
                            for (o, x) in db.data_mut().iter_mut().zip(g.row(r)) {
                                *o += x;
                            }
                        }
                        emit(*a, g);
                        emit(*b, db);
                    }
                    Op::Scale(a, s) => emit(*a, g.map(|x| x * s)),
                    Op::Relu(a) => emit(*a, g.zip_map(val(*a), |x, v| if v > 0.0 { x } else { 0.0 })),
                    Op::LeakyRelu(a, slope) => {
                        emit(*a, g.zip_map(val(*a), |x, v| if v > 0.0 { x } else { x * slope }))
                    }
                    Op::Exp(a) => emit(*a, g.zip_map(&node.value, |x, y| x * y)),
                    Op::Log(a) => emit(*a, g.zip_map(val(*a), |x, v| x / v)),
                    Op::ConcatCols(a, b) => {
                        let ca = val(*a).cols();
                        let cb = val(*b).cols();
                        let mut ga = Tensor::zeros(g.rows(), ca);
                        let mut gb = Tensor::zeros(g.rows(), cb);
                        for r in 0..g.rows() {
                            ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                            gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                        }
                        emit(*a, ga);
                        emit(*b, gb);
                    }
                    Op::GatherRows(a, idx) => {
                        let src = val(*a);
                        let mut ga = Tensor::zeros(src.rows(), src.cols());
                        for (o, &r) in idx.iter().enumerate() {
                            for (d, x) in ga.row_mut(r).iter_mut().zip(g.row(o)) {
                                *d += x;
                            }
                        }
                        emit(*a, ga);
                    }
                    Op::RowSoftmax(a) => {
                        let y = &node.value;
                        let mut ga = Tensor::zeros(y.rows(), y.cols());
                        for r in 0..y.rows() {
                            let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(x, p)| x * p).sum();
                            for ((d, x), p) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                                *d = p * (x - dot);
                            }
                        }
                        emit(*a, ga);
                    }
                    Op::RowLogSoftmax(a) => {
                        let y = &node.value;
                        let mut ga = Tensor::zeros(y.rows(), y.cols());
                        for r in 0..y.rows() {
                            let total: f64 = g.row(r).iter().sum();
                            for ((d, x), ly) in ga.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                                *d = x - ly.exp() * total;
                            }
                        }
                        emit(*a, ga);
                    }
                    Op::Sum(a) => {
                        let (r, c) = val(*a).shape();
                        emit(*a, Tensor::filled(r, c, g.data()[0]));
                    }
                    Op::MeanRows(a) => {
                        let (r, c) = val(*a).shape();
                        let mut ga = Tensor::zeros(r, c);
                        for i in 0..r {
                            for (d, x) in ga.row_mut(i).iter_mut().zip(g.row(0)) {
                                *d = x / r as f64;
                            }
                        }
                        emit(*a, ga);
                    }
                    Op::ClampMax(a, cap) => {
                        emit(*a, g.zip_map(val(*a), |x, v| if v < *cap { x } else { 0.0 }))
                    }
                    Op::CrossEntropyRows { logits, labels, rows } => {
                        let z = val(*logits);
                        let mut gz = Tensor::zeros(z.rows(), z.cols());
                        for (o, &r) in rows.iter().enumerate() {
                            let probs = softmax(z.row(r));
                            let go = g.data()[o];
                            for (c, (d, p)) in gz.row_mut(r).iter_mut().zip(probs).enumerate() {
                                let onehot = if c == labels[r] { 1.0 } else { 0.0 };
                                *d += go * (p - onehot);
                            }
                        }
                        emit(*logits, gz);
                    }
                    Op::KlRows { target, q, rows } => {
                        let qv = val(*q);
                        let mut gq = Tensor::zeros(qv.rows(), qv.cols());
                        for (o, &r) in rows.iter().enumerate() {
                            let go = g.data()[o];
                            for ((d, &p), &qq) in gq.row_mut(r).iter_mut().zip(target.row(r)).zip(qv.row(r)) {
                                if p > 0.0 && qq > KL_FLOOR {
                                    *d += -go * p / qq;
                                }
                            }
                        }
                        emit(*q, gq);
                    }
                    Op::Attention {
                        pattern,
                        dst,
                        src,
                        values,
                        slope,
                    } => {
                        let (gd, gs, gv) =
                            attention_backward(pattern, val(*dst), val(*src), val(*values), *slope, &g);
                        emit(*dst, gd);
                        emit(*src, gs);
                        emit(*values, gv);
                    }
                }
            }
        }
        let mut nodes = self.nodes.borrow_mut();
        for (i, g) in leaf_grads {
            match &mut nodes[i].grad {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn check_rows(op: &'static str, rows: &[usize], n: usize) -> Result<()> {
    if rows.is_empty() {
        return Err(AguError::EmptySet(op));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= n) {
        return Err(AguError::dim(op, format!("row {r} out of range for {n} rows")));
    }
    Ok(())
}

fn check_distribution(op: &'static str, t: &Tensor, rows: &[usize]) -> Result<()> {
    for &r in rows {
        let row = t.row(r);
        if row.iter().any(|&x| !(x >= 0.0)) {
            return Err(AguError::domain(op, format!("row {r} has a negative or NaN entry")));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 {
            return Err(AguError::domain(op, format!("row {r} sums to {s}")));
        }
    }
    Ok(())
}

/// Per-edge attention logits over `pattern` and their row softmax.
fn attention_weights(pattern: &SparseMatrix, dst: &Tensor, src: &Tensor, slope: f64) -> (Vec<f64>, Vec<f64>) {
    let mut pre = Vec::with_capacity(pattern.nnz());
    let mut alpha = Vec::with_capacity(pattern.nnz());
    let offs = pattern.row_offsets();
    for i in 0..pattern.rows() {
        let start = pre.len();
        for (j, _) in pattern.row(i) {
            pre.push(dst.get(i, 0) + src.get(j, 0));
        }
        let z: Vec<f64> = pre[start..]
            .iter()
            .map(|&e| if e > 0.0 { e } else { slope * e })
            .collect();
        debug_assert_eq!(start, offs[i]);
        alpha.extend(softmax_or_empty(&z));
    }
    (pre, alpha)
}

fn softmax_or_empty(z: &[f64]) -> Vec<f64> {
    if z.is_empty() {
        Vec::new()
    } else {
        softmax(z)
    }
}

fn attention_backward(
    pattern: &SparseMatrix,
    dst: &Tensor,
    src: &Tensor,
    values: &Tensor,
    slope: f64,
    g: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let (pre, alpha) = attention_weights(pattern, dst, src, slope);
    let n = pattern.rows();
    let mut gd = Tensor::zeros(n, 1);
    let mut gs = Tensor::zeros(src.rows(), 1);
    let mut gv = Tensor::zeros(values.rows(), values.cols());
    let offs = pattern.row_offsets();
    for i in 0..n {
        let gi = g.row(i);
        let lo = offs[i];
        let cols: Vec<usize> = pattern.row(i).map(|(j, _)| j).collect();
        let dalpha: Vec<f64> = cols
            .iter()
            .map(|&j| gi.iter().zip(values.row(j)).map(|(a, b)| a * b).sum())
            .collect();
        let dot: f64 = dalpha.iter().zip(&alpha[lo..lo + cols.len()]).map(|(d, a)| d * a).sum();
        for (k, &j) in cols.iter().enumerate() {
            let a = alpha[lo + k];
            for (o, x) in gv.row_mut(j).iter_mut().zip(gi) {
                *o += a * x;
            }
            let dz = a * (dalpha[k] - dot);
            let de = if pre[lo + k] > 0.0 { dz } else { dz * slope };
            gd.data_mut()[i] += de;
            gs.data_mut()[j] += de;
        }
    }
    (gd, gs, gv)
}

impl<'t> Var<'t> {
    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value(self.idx)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.tape.nodes.borrow()[self.idx].value.shape()
    }

    pub fn requires_grad(&self) -> bool {
        self.tape.requires_grad(self.idx)
    }

    /// Accumulated gradient of a leaf, if any has reached it.
    pub fn grad(&self) -> Option<Tensor> {
        self.tape.nodes.borrow()[self.idx].grad.clone()
    }

    /// Scalar value of a 1x1 var.
    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    fn same_tape(&self, other: &Var<'t>) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(AguError::Contract("vars from different tapes".into()))
        }
    }

    fn binary(
        self,
        other: Var<'t>,
        op: &'static str,
        make: fn(usize, usize) -> Op,
        f: fn(f64, f64) -> f64,
    ) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        a.same_shape(&b, op)?;
        let out = a.zip_map(&b, f);
        Ok(self.tape.derived(out, make(self.idx, other.idx), &[self.idx, other.idx]))
    }

    fn unary(self, op: Op, out: Tensor) -> Var<'t> {
        self.tape.derived(out, op, &[self.idx])
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let out = self.value().matmul(&other.value())?;
        Ok(self
            .tape
            .derived(out, Op::MatMul(self.idx, other.idx), &[self.idx, other.idx]))
    }

    /// `sparse · self`; the sparse operand is constant.
    pub fn spmm_by(self, sparse: &Rc<SparseMatrix>) -> Result<Var<'t>> {
        let out = sparse.spmm(&self.value())?;
        Ok(self.unary(Op::SpMM(Rc::clone(sparse), self.idx), out))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "add", Op::Add, |a, b| a + b)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "sub", Op::Sub, |a, b| a - b)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, "mul", Op::Mul, |a, b| a * b)
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_bias(self, bias: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&bias)?;
        let (a, b) = (self.value(), bias.value());
        if b.rows() != 1 || b.cols() != a.cols() {
            return Err(AguError::dim(
                "add_bias",
                format!("bias {}x{} for {}x{}", b.rows(), b.cols(), a.rows(), a.cols()),
            ));
        }
        let mut out = (*a).clone();
        for r in 0..out.rows() {
            for (o, x) in out.row_mut(r).iter_mut().zip(b.data()) {
                *o += x;
            }
        }
        Ok(self
            .tape
            .derived(out, Op::AddBias(self.idx, bias.idx), &[self.idx, bias.idx]))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        let out = self.value().map(|x| x * s);
        self.unary(Op::Scale(self.idx, s), out)
    }

    pub fn relu(self) -> Var<'t> {
        let out = self.value().map(|x| if x > 0.0 { x } else { 0.0 });
        self.unary(Op::Relu(self.idx), out)
    }

    pub fn leaky_relu(self, slope: f64) -> Var<'t> {
        let out = self.value().map(|x| if x > 0.0 { x } else { slope * x });
        self.unary(Op::LeakyRelu(self.idx, slope), out)
    }

    pub fn exp(self) -> Var<'t> {
        let out = self.value().map(f64::exp);
        self.unary(Op::Exp(self.idx), out)
    }

    pub fn log(self) -> Result<Var<'t>> {
        let v = self.value();
        if let Some(x) = v.data().iter().find(|&&x| !(x > 0.0)) {
            return Err(AguError::domain("log", format!("non-positive input {x}")));
        }
        let out = v.map(f64::ln);
        Ok(self.unary(Op::Log(self.idx), out))
    }

    pub fn concat_cols(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other)?;
        let (a, b) = (self.value(), other.value());
        if a.rows() != b.rows() {
            return Err(AguError::dim(
                "concat_cols",
                format!("{} rows vs {} rows", a.rows(), b.rows()),
            ));
        }
        let mut out = Tensor::zeros(a.rows(), a.cols() + b.cols());
        for r in 0..a.rows() {
            let row = out.row_mut(r);
            row[..a.cols()].copy_from_slice(a.row(r));
            row[a.cols()..].copy_from_slice(b.row(r));
        }
        Ok(self
            .tape
            .derived(out, Op::ConcatCols(self.idx, other.idx), &[self.idx, other.idx]))
    }

    pub fn gather_rows(self, indices: &[usize]) -> Result<Var<'t>> {
        let out = self.value().select_rows(indices)?;
        Ok(self.unary(Op::GatherRows(self.idx, indices.into()), out))
    }

    pub fn row_softmax(self) -> Var<'t> {
        let v = self.value();
        let mut out = Tensor::zeros(v.rows(), v.cols());
        for r in 0..v.rows() {
            out.row_mut(r).copy_from_slice(&softmax(v.row(r)));
        }
        self.unary(Op::RowSoftmax(self.idx), out)
    }

    pub fn row_log_softmax(self) -> Var<'t> {
        let v = self.value();
        let mut out = Tensor::zeros(v.rows(), v.cols());
        for r in 0..v.rows() {
            let lse = log_sum_exp(v.row(r));
            for (o, x) in out.row_mut(r).iter_mut().zip(v.row(r)) {
                *o = x - lse;
            }
        }
        self.unary(Op::RowLogSoftmax(self.idx), out)
    }

    /// Sum of every entry, as a 1x1 var.
    pub fn sum(self) -> Var<'t> {
        let out = Tensor::scalar(self.value().sum());
        self.unary(Op::Sum(self.idx), out)
    }

    /// Column means, as a `1 x cols` var.
    pub fn mean_rows(self) -> Result<Var<'t>> {
        let v = self.value();
        if v.rows() == 0 {
            return Err(AguError::EmptySet("mean_rows"));
        }
        let mut out = Tensor::zeros(1, v.cols());
        for r in 0..v.rows() {
            for (o, x) in out.data_mut().iter_mut().zip(v.row(r)) {
                *o += x;
            }
        }
        let n = v.rows() as f64;
        out.data_mut().iter_mut().for_each(|x| *x /= n);
        Ok(self.unary(Op::MeanRows(self.idx), out))
    }

    /// Mean of every entry, as a 1x1 var.
    pub fn mean(self) -> Result<Var<'t>> {
        let n = self.value().len();
        if n == 0 {
            return Err(AguError::EmptySet("mean"));
        }
        Ok(self.sum().scale(1.0 / n as f64))
    }

    /// `min(x, cap)` entrywise; the gradient is zero where the cap is active.
    pub fn clamp_max(self, cap: f64) -> Var<'t> {
        let out = self.value().map(|x| x.min(cap));
        self.unary(Op::ClampMax(self.idx, cap), out)
    }

    /// Per-row cross entropy `-log softmax(self)[label]` for each entry of
    /// `rows`, as an `|rows| x 1` var. `labels` is indexed by row id.
    pub fn cross_entropy_rows(self, labels: &[usize], rows: &[usize]) -> Result<Var<'t>> {
        let z = self.value();
        check_rows("cross_entropy", rows, z.rows())?;
        if labels.len() != z.rows() {
            return Err(AguError::dim(
                "cross_entropy",
                format!("{} labels for {} rows", labels.len(), z.rows()),
            ));
        }
        let mut out = Tensor::zeros(rows.len(), 1);
        for (o, &r) in rows.iter().enumerate() {
            let label = labels[r];
            if label >= z.cols() {
                return Err(AguError::domain(
                    "cross_entropy",
                    format!("label {label} out of range for {} classes", z.cols()),
                ));
            }
            out.data_mut()[o] = log_sum_exp(z.row(r)) - z.get(r, label);
        }
        Ok(self.unary(
            Op::CrossEntropyRows {
                logits: self.idx,
                labels: labels.into(),
                rows: rows.into(),
            },
            out,
        ))
    }

    /// Per-row `KL(target_r || self_r)` for each entry of `rows`, with the
    /// second argument floored at [`KL_FLOOR`]. Both sides must be row
    /// distributions on the selected rows.
    pub fn kl_rows_from(self, target: &Tensor, rows: &[usize]) -> Result<Var<'t>> {
        let q = self.value();
        q.same_shape(target, "kl_divergence")?;
        check_rows("kl_divergence", rows, q.rows())?;
        check_distribution("kl_divergence", target, rows)?;
        check_distribution("kl_divergence", &q, rows)?;
        let mut out = Tensor::zeros(rows.len(), 1);
        for (o, &r) in rows.iter().enumerate() {
            out.data_mut()[o] = target
                .row(r)
                .iter()
                .zip(q.row(r))
                .filter(|(&p, _)| p > 0.0)
                .map(|(&p, &qq)| p * (p.ln() - qq.max(KL_FLOOR).ln()))
                .sum();
        }
        Ok(self.unary(
            Op::KlRows {
                target: Rc::new(target.clone()),
                q: self.idx,
                rows: rows.into(),
            },
            out,
        ))
    }
}

/// Single-head attention aggregation over the nonzero pattern of `pattern`.
///
/// For row `i` with pattern neighbors `j`:
/// `e_ij = LeakyReLU(dst_i + src_j)`, `a_i = softmax_j(e_ij)`,
/// `out_i = sum_j a_ij * values_j`. Rows with no pattern entries are zero.
pub fn attention<'t>(
    pattern: &Rc<SparseMatrix>,
    dst: Var<'t>,
    src: Var<'t>,
    values: Var<'t>,
    slope: f64,
) -> Result<Var<'t>> {
    dst.same_tape(&src)?;
    dst.same_tape(&values)?;
    let (d, s, v) = (dst.value(), src.value(), values.value());
    let n = pattern.rows();
    if d.shape() != (n, 1) || s.shape() != (pattern.cols(), 1) || v.rows() != pattern.cols() {
        return Err(AguError::dim(
            "attention",
            format!(
                "pattern {}x{}, dst {:?}, src {:?}, values {:?}",
                n,
                pattern.cols(),
                d.shape(),
                s.shape(),
                v.shape()
            ),
        ));
    }
    let (_, alpha) = attention_weights(pattern, &d, &s, slope);
    let mut out = Tensor::zeros(n, v.cols());
    let offs = pattern.row_offsets();
    for i in 0..n {
        let lo = offs[i];
        for (k, (j, _)) in pattern.row(i).enumerate() {
            let a = alpha[lo + k];
            for (o, x) in out.row_mut(i).iter_mut().zip(v.row(j)) {
                *o += a * x;
            }
        }
    }
    let tape = dst.tape;
    Ok(tape.derived(
        out,
        Op::Attention {
            pattern: Rc::clone(pattern),
            dst: dst.idx,
            src: src.idx,
            values: values.idx,
            slope,
        },
        &[dst.idx, src.idx, values.idx],
    ))
}
