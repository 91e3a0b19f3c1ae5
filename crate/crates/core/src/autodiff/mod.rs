//! Reverse-mode differentiation over a Wengert tape.
//!
//! Every primitive evaluates eagerly, appends one node to the [`Tape`] and
//! returns a [`Var`] handle. [`Tape::backward`] walks the nodes in exact
//! reverse order of execution, calling each node's [`Op::backward`].
//!
//! Parameters are bound onto a tape with [`Tape::param`]; their gradients are
//! accumulated (added, never overwritten) into the owning
//! [`ParamStore`](crate::param::ParamStore).

mod ops;
mod tape;

pub(crate) use ops::gelu_derivative;
pub use ops::{PoolMode, UpsampleMode, LOG_CLAMP};
pub use tape::{Gradients, NodeId, Op, Tape, Var};
