//! Graph unlearning for small message-passing networks.
//!
//! The crate trains GCN, SGC, GAT, GIN and GraphSAGE models on attributed
//! graphs, removes nodes, edges or feature rows from a trained model by
//! fine-tuning against task-specific objectives, and checks the result
//! against retraining from scratch.

pub mod bench;
pub mod cli;
pub mod error;
pub mod graph;
pub mod model;
pub mod neighbors;
pub mod numeric;
pub mod seed;
pub mod unlearn;

pub use error::{AguError, Result};
