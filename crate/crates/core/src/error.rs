//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Vector/matrix dimensions do not line up.
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    /// A forward pass produced a non-finite intermediate value.
    #[error("non-finite value at node {node} (op {op}) during forward pass")]
    NumericalOverflow { op: &'static str, node: usize },

    /// `backward` was called before `forward` on the same root.
    #[error("backward called before forward on this graph root")]
    StaleGraph,

    /// A size guard was exceeded (full Fisher, Hessian oracle, grid dims).
    #[error("{what} supports at most {limit} parameters, got {got}")]
    Capacity {
        what: &'static str,
        limit: usize,
        got: usize,
    },

    /// Empty or otherwise unusable input data.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Grid bounds do not contain the posterior mode with enough margin.
    #[error("grid bounds too tight: {0}")]
    BoundsTooTight(String),

    /// MAP ascent failed to reach the gradient-norm tolerance.
    #[error("optimization failed to converge after {steps} steps (gradient norm {grad_norm:.3e})")]
    OptimizationFailure { steps: usize, grad_norm: f64 },

    /// The negative Hessian at the located mode is not positive definite.
    #[error("mode is a saddle or flat region: min precision eigenvalue {min_eigenvalue:.3e}")]
    SaddleOrFlat { min_eigenvalue: f64 },

    /// The training loss went non-finite or exploded.
    #[error("training diverged at epoch {epoch} (learning rate {learning_rate}): loss {loss}")]
    Divergence {
        epoch: usize,
        learning_rate: f64,
        loss: f64,
    },

    /// Bad experiment or generator configuration.
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.into(),
            got: got.into(),
        }
    }
}
