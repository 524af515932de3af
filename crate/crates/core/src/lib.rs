//! Mirror flow matching on convex domains.
//!
//! Data on an open convex set `K` is pushed through a mirror map `∇Ψ` into `ℝ^d`,
//! a velocity field is learned there by flow matching from a (Student-t) prior, and
//! samples produced by an early-stopped Euler scheme are pulled back with `∇Ψ*`.
//! Pulled-back samples lie strictly inside `K` by construction.

pub mod batch;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod prior;

pub use batch::{BatchMeta, SampleBatch, Space};
pub use error::{Error, Result};
pub use flow::{SamplerConfig, VelocityField, ZeroVelocity};
pub use geometry::{ConvexDomain, DomainKind, MapVariant, MirrorMap, TailReport};
pub use metrics::MetricReport;
pub use model::{Architecture, MlpVelocity, TrainConfig, TrainReport};
pub use oracle::{LipschitzEstimate, OracleVelocity, ProbeGrid};
pub use prior::{FiniteAtomTarget, MixtureComponent, Prior, PriorKind, StudentTPrior, TruncatedMixtureTarget};
