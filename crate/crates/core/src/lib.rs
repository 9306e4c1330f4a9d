//! Hyperdimensional knowledge graph completion.
//!
//! Vertices and relations carry small trainable embeddings that a fixed
//! Gaussian projection lifts into hyperspace. Each vertex memorizes its
//! neighborhood by binding neighbor and relation hypervectors and bundling
//! the results; a TransE-style L1 score over memory hypervectors ranks
//! candidate objects. Only the original embeddings are trained.
//!
//! Alongside the model, [`sim`] is a behavioral simulator of an accelerator
//! for this workload: degree-bucketed scheduling, an encoded-hypervector
//! registry, an on-chip hypervector cache, and an analytic cost model.

mod binio;
pub mod error;
pub mod eval;
pub mod exec;
pub mod hdc;
pub mod kg;
pub mod matrix;
pub mod model;
pub mod rng;
pub mod robustness;
pub mod sim;

pub use error::{Error, Result};
pub use matrix::Matrix;

/// Format/behavior version embedded in every emitted artifact.
pub const SPEC_VERSION: &str = "1.0";
