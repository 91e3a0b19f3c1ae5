//! Spatio-temporal segmentation of cerebral arteries in angiography sequences.
//!
//! The crate bundles a small reverse-mode tensor engine ([`autodiff`]), the
//! dual-branch segmentation network ([`model`]), sequence preprocessing and
//! sliding-window stitching ([`pipeline`]), training objectives and the
//! evaluation suite ([`loss`], [`metrics`]), and a synthetic contrast-flow
//! phantom generator ([`phantom`]).

pub mod autodiff;
pub mod error;
pub mod gradcheck;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod param;
pub mod phantom;
pub mod pipeline;
pub mod tensor;
pub mod train;
pub mod verify;

pub use autodiff::{Tape, Var};
pub use error::{Error, Result};
pub use param::{ParamId, ParamStore};
pub use tensor::{DType, Scalar, Tensor};
