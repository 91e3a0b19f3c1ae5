//! The dual-branch segmentation network.
//!
//! A spatial encoder reads the MinIP, a temporal encoder reads every frame
//! (frames folded into the batch axis). Skips are fused by a temporal max
//! and channel concatenation; the temporal bottleneck runs through the
//! TemporalFormer, both bottlenecks meet in the fusion module, and a
//! deep-supervised decoder emits logits at three scales.

mod config;
mod decoder;
mod encoder;
mod layers;
mod net;
mod stf;
mod temporal;

pub use config::{norm_groups, ModelConfig, Variant};
pub use decoder::{Decoder, ModelOutput};
pub use encoder::{collapse_frames, fuse_skips, Encoder, EncoderState};
pub use layers::{AttentionRecord, Conv, Ctx, DoubleConv, Linear, Norm, SelfAttention, UpConv, NORM_EPS};
pub use net::DsaNet;
pub use stf::Stf;
pub use temporal::{TemporalFormer, TfLayer};
