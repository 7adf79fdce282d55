//! Triple feature propagation: a decoding stage for knowledge-graph entity
//! alignment.
//!
//! Given two knowledge graphs, a set of seed entity pairs and one embedding
//! per entity, the decoder propagates features through generalized adjacency
//! views of the joint graph (entity-to-relation, relation-to-entity,
//! entity-to-entity and triple-to-relation), compresses the result with
//! random projections, and assembles relation-conditioned output features.
//! Alignment is then read off a similarity matrix, optionally sharpened by
//! Sinkhorn normalization.
//!
//! All numeric code is generic over the floating-point scalar ([`Scalar`]);
//! the aliases below fix the two concrete choices.

pub mod align;
pub mod decoder;
pub mod dense;
pub mod energy;
pub mod error;
pub mod flow;
pub mod kg;
pub mod metrics;
pub mod scalar;
pub mod sparse;
pub mod synth;
pub mod views;

pub use align::{Assignment, SimilarityMatrix};
pub use decoder::{DecodeConfig, DecodeOutput, HistoryMode, JointIndex, PropagationViews};
pub use dense::FeatureMatrix;
pub use error::{Error, Result};
pub use kg::{DatasetPair, KnowledgeGraph, SeedAlignment, Triple};
pub use scalar::Scalar;
pub use sparse::SparseMatrix;

/// Double-precision sparse matrix, the precision the test suite runs in.
pub type SparseF64 = SparseMatrix<f64>;
/// Single-precision sparse matrix, for memory-constrained runtimes.
pub type SparseF32 = SparseMatrix<f32>;
/// Double-precision dense features.
pub type FeaturesF64 = FeatureMatrix<f64>;
/// Single-precision dense features.
pub type FeaturesF32 = FeatureMatrix<f32>;
/// Double-precision similarity matrix.
pub type SimilarityF64 = SimilarityMatrix<f64>;
/// Single-precision similarity matrix.
pub type SimilarityF32 = SimilarityMatrix<f32>;
