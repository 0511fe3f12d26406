//! Linear self-supervised learning on Gaussian mixtures: models, subspace
//! analysis, contrastive and non-contrastive objectives, training, clustering
//! metrics, and a sweep harness.

pub mod cluster;
pub mod error;
pub mod harness;
pub mod json;
pub mod linalg;
pub mod mixture;
pub mod objectives;
pub mod optim;
pub mod rng;
pub mod subspace;

pub use error::{Error, Result};
pub use mixture::{AedConfig, ClipGmm, LabeledSample, SharedGmm};
pub use rng::Seed;
pub use subspace::{ProjectionMap, Subspace, SubspaceReport};
