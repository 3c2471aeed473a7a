//! Unsupervised node representation learning by contrasting k-means cluster
//! assignments between two augmented views of a graph.
//!
//! One view mixes attributes through personalized-PageRank diffusion, the
//! other through the normalized adjacency of a graph with randomly removed
//! edges; both mask random attribute columns. A shared one-layer GCN encoder
//! and MLP projector map each view to representations, k-means prototypes are
//! fitted per view, and each view is trained to predict the other's cluster
//! assignments.

pub mod augment;
pub mod cluster;
pub mod contrastive;
pub mod error;
pub mod eval;
pub mod graph;
pub mod linalg;
pub mod neuro;
pub mod pipeline;
pub mod rng;
pub mod synth;

pub use augment::{AugParams, MixMatrix, View};
pub use error::{Error, Result};
pub use graph::{sym_normalize, Graph, NodeSplit, SplitProtocol};
pub use linalg::{spmm, DenseMatrix, SparseMatrix};
pub use cluster::{ClusterMode, ClusterState, KMeansParams, MemoryBank, MultiClusterSet};
pub use contrastive::LossReport;
pub use eval::Metrics;
pub use neuro::{Activation, ModelConfig, ModelParams};
pub use pipeline::{embed, train, Ablation, TrainConfig, TrainTrace};
