//! Sparse multilayer perceptrons and the study of their connectivity.
//!
//! The crate trains small fully connected networks under five mask
//! generators ([`algorithms`]) and analyses the structures they find
//! ([`analysis`]): retraining a structure from fresh weights, measuring how
//! accuracy degrades under further pruning, and tracing node in-degrees
//! through training.
//!
//! Everything is `f64`, single-threaded per run and fully determined by the
//! run seed.

pub mod algorithms;
pub mod analysis;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod io;
pub mod matrix;
pub mod model;
pub mod sparsity;
pub mod train;

pub use algorithms::{train, AlgorithmKind, AlgorithmSpec, TrainResult};
pub use dataset::{DataSplit, Dataset};
pub use error::{Error, Result};
pub use matrix::{Matrix, WeightMatrix};
pub use model::{backward, forward, kaiming_init, LayerState, SparseModel};
pub use sparsity::{density_to_k, in_degree, model_sparsity, top_k_mask, Mask, SparsitySpec};
pub use train::{evaluate, sgd_step, train_static, TrainConfig};
