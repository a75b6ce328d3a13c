//! Multi-label feature selection by graph random walks and structured
//! correlation matrix factorization.
//!
//! The pipeline runs in five stages, each in its own module:
//!
//! 1. [`data`]: load a train/test pair of CSV/TSV matrices with trailing label
//!    columns, scale features, and rank scores.
//! 2. [`graph`]: build the feature/label composite graph (Gaussian-kernel
//!    adjacencies, mutual-information coupling, transition matrices).
//! 3. [`walker`]: run seeded random walks over the composite graph and
//!    accumulate the decayed, MI-weighted feature-label association matrix.
//! 4. [`optimizer`]: factorize `X ≈ VQ`, `Y ≈ VB` with the association,
//!    alignment and row-sparsity terms by multiplicative updates, then score
//!    features by the row norms of `QᵀB`.
//! 5. [`eval`]: judge a feature ranking with kNN / MLkNN and the usual
//!    multi-label metrics.
//!
//! [`synthetic`] generates planted datasets with known relevant features.
//! [`pipeline`] wires the stages together and writes the on-disk artifacts
//! used by the `grwscmf` command-line tool.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below name the `f64` instantiations used by the pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod graph;
pub mod optimizer;
pub mod pipeline;
pub mod scalar;
pub mod synthetic;
pub mod walker;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use data::{FeatureRanking, Matrix, MultiLabelDataset};
pub use eval::{Classifier, EvalReport, PredictionSet};
pub use graph::{RelevanceGraph, SigmaPolicy};
pub use optimizer::{Ablation, FactorizationState, Hyperparams};
pub use walker::{Node, RwmiMatrix, WalkConfig, WalkSequence};

pub type Matrix64 = Matrix<f64>;
pub type Dataset64 = MultiLabelDataset<f64>;
pub type Ranking64 = FeatureRanking<f64>;
pub type Graph64 = RelevanceGraph<f64>;
pub type Rwmi64 = RwmiMatrix<f64>;
pub type Hyperparams64 = Hyperparams<f64>;
pub type State64 = FactorizationState<f64>;

pub type Matrix32 = Matrix<f32>;
pub type Graph32 = RelevanceGraph<f32>;
pub type State32 = FactorizationState<f32>;
