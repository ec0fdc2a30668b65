use crate::error::Result;
use crate::numeric::{Tensor, Var};

/// Mean over `rows` of `-log softmax(logits)[label]`.
pub fn cross_entropy<'t>(logits: Var<'t>, labels: &[usize], rows: &[usize]) -> Result<Var<'t>> {
    logits.cross_entropy_rows(labels, rows)?.mean()
}

/// Mean over `rows` of `KL(p_r || q_r)`, `q` floored at [`super::KL_FLOOR`].
pub fn kl_divergence<'t>(p: &Tensor, q: Var<'t>, rows: &[usize]) -> Result<Var<'t>> {
    q.kl_rows_from(p, rows)?.mean()
}

/// Mean squared elementwise difference.
pub fn mse<'t>(a: Var<'t>, b: Var<'t>) -> Result<Var<'t>> {
    let d = a.sub(b)?;
    d.mul(d)?.mean()
}
