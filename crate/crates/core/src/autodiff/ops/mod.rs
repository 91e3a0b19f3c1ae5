//! Differentiable primitives, each with a forward kernel and an [`Op`](super::Op)
//! backward rule.

mod activation;
mod conv;
mod elementwise;
mod linalg;
mod loss;
mod norm;
mod pool;
mod shape;

pub(crate) use activation::gelu_derivative;
pub use loss::LOG_CLAMP;
pub use pool::{PoolMode, UpsampleMode};
