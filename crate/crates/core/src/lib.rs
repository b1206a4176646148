//! Cluster discrimination over fused embeddings: k-means pseudo labels, a
//! margin softmax with random class and feature selection, and the retrieval
//! metrics and ablations used to check it.

pub mod cli;
pub mod clustering;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod linalg;
pub mod rng;
pub mod selection;
pub mod trainer;

pub use error::{Error, Result};
