//! Desk-scale continual-learning laboratory.
//!
//! Implements elastic weight consolidation end to end: a minimal reverse-mode
//! autodiff engine, a small MLP classifier, Fisher-information estimators with
//! a finite-difference Hessian oracle, Laplace posterior approximation on tiny
//! models, the quadratic consolidation penalty, synthetic task-stream
//! generators, and the sequential trainer that exhibits (and then prevents)
//! catastrophic forgetting.
//!
//! Everything is float64 and seed-deterministic: the same configuration
//! produces bit-identical results regardless of worker count. Data-parallel
//! inner loops (per-example gradients, Hessian stencils, grid evaluation,
//! batch prediction, sweeps) run on rayon when the `parallel` feature is
//! enabled (the default) and fall back to plain iterators otherwise.

pub mod autodiff;
pub mod error;
pub mod ewc;
pub mod fisher;
pub mod laplace;
pub mod model;
pub(crate) mod par;
pub mod seeds;
pub mod tasks;
pub mod trainer;

pub use autodiff::{Graph, NodeId, ParamLayout, ParamVector};
pub use error::{Error, Result};
pub use model::{Architecture, Batch, Mlp};
