//! Dense and sparse matrices with a small reverse-mode tape.

mod loss;
mod optim;
mod sparse;
mod tape;
mod tensor;

pub use loss::{cross_entropy, kl_divergence, mse};
pub use optim::{optimizer_step, AdamConfig, AdamState};
pub use sparse::SparseMatrix;
pub use tape::{attention, Tape, Var, KL_FLOOR};
pub use tensor::Tensor;
