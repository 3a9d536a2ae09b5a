//! Friend risk labeling.
//!
//! Stranger risk labels given by a user are explained as a baseline driven by
//! the stranger's profile plus shifts caused by the mutual friends through
//! which the stranger is reached. Friends are grouped by the frequency of
//! their attribute values in the owner's friend set; the learned per-cluster
//! impacts are turned into friend risk labels.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix the scalar to `f64`, with `32`-suffixed variants for `f32`.

pub mod analysis;
pub mod baseline;
pub mod cluster;
pub mod error;
pub mod eval;
pub mod impact;
pub mod linalg;
pub mod network;
pub mod persist;
pub mod pipeline;
pub mod risklabel;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod transform;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Sfm = transform::SocialFrequencyMatrix<f64>;
pub type Sfm32 = transform::SocialFrequencyMatrix<f32>;
pub type Clusters = cluster::ClusterAssignment<f64>;
pub type Clusters32 = cluster::ClusterAssignment<f32>;
pub type Model = baseline::MultinomialModel<f64>;
pub type Model32 = baseline::MultinomialModel<f32>;
pub type Impacts = impact::ImpactMatrix<f64>;
pub type Impacts32 = impact::ImpactMatrix<f32>;
