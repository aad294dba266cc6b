//! Graph autoencoders for link prediction, including the normalized graph
//! convolution (GNCN) that keeps isolated-node embeddings away from zero.
//!
//! The crate covers graph storage and normalization, a small reverse-mode
//! autodiff tape, the GAE/VGAE/GNAE/VGNAE models with Adam training, edge
//! splits, ranking metrics, dataset bundles and checkpoints.
//!
//! With the default `parallel` feature the dense and sparse kernels run
//! row-parallel on rayon; results are bitwise identical to the serial build.

// Negated comparisons deliberately treat NaN as failing; tape ops return
// `Result`, so they are methods rather than operator impls.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::should_implement_trait)]

pub mod autodiff;
pub mod checkpoint;
pub mod dataio;
pub mod encoders;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod optim;
mod par;
pub mod split;

pub use error::{Error, Result};
pub use graph::{Edge, Graph, NormalizedAdjacency};
pub use matrix::Matrix;
pub use models::{Model, ModelConfig, ModelKind};
pub use par::is_parallel;
pub use split::{EdgeSplit, SplitMode};
