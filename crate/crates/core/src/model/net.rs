use super::config::{ModelConfig, Variant};
use super::decoder::{Decoder, ModelOutput};
use super::encoder::{collapse_frames, fuse_skips, Encoder};
use super::layers::Ctx;
use super::stf::Stf;
use super::temporal::TemporalFormer;
use crate::autodiff::Var;
use crate::error::{dim_err, Result};
use crate::param::ParamStore;
use crate::tensor::{Scalar, Tensor};

/// The full network. Parameters live in a [`ParamStore`]; this struct holds
/// only their ids, so one instance serves any scalar type.
#[derive(Clone, Debug)]
pub struct DsaNet {
    pub config: ModelConfig,
    /// Spatial branch over the MinIP (absent for [`Variant::SequenceOnly`]).
    pub seb: Option<Encoder>,
    /// Temporal branch over frames (absent for [`Variant::MinipOnly`]).
    pub teb: Option<Encoder>,
    pub tf: Option<TemporalFormer>,
    pub stf: Stf,
    pub decoder: Decoder,
}

impl DsaNet {
    pub fn new<S: Scalar>(config: &ModelConfig, store: &mut ParamStore<S>) -> Result<Self> {
        config.validate()?;
        let spatial = config.variant != Variant::SequenceOnly;
        let temporal = config.variant != Variant::MinipOnly;
        Ok(DsaNet {
            config: config.clone(),
            seb: spatial.then(|| Encoder::new(store, "seb", config)).transpose()?,
            teb: temporal.then(|| Encoder::new(store, "teb", config)).transpose()?,
            tf: temporal.then(|| TemporalFormer::new(store, "tf", config)).transpose()?,
            stf: Stf::new(store, "stf", config.bottleneck_channels())?,
            decoder: Decoder::new(store, "decoder", config)?,
        })
    }

    /// `seq: [B, T, 1, H, W]`, `minip: [B, 1, H, W]`.
    pub fn forward<'t, S: Scalar>(
        &self,
        ctx: &Ctx<'t, '_, S>,
        seq: Var<'t, S>,
        minip: Var<'t, S>,
    ) -> Result<ModelOutput<'t, S>> {
        let (ss, ms) = (seq.shape(), minip.shape());
        let t = self.config.frames;
        if ss.len() != 5 || ss[1] != t || ss[2] != 1 || ms.len() != 4 || ms[0] != ss[0] || ms[1] != 1 || ss[3..] != ms[2..] {
            return Err(dim_err!("inputs {:?} / {:?}: need [B, {}, 1, H, W] and [B, 1, H, W]", ss, ms, t));
        }
        let m = self.config.size_multiple();
        if ms[2] % m != 0 || ms[3] % m != 0 {
            return Err(dim_err!("spatial size {}x{} is not a multiple of {}", ms[2], ms[3], m));
        }
        let b = ss[0];

        let spatial = self.seb.as_ref().map(|e| e.forward(ctx, minip)).transpose()?;
        let temporal = match &self.teb {
            Some(e) => {
                let frames = seq.reshape(&[b * t, 1, ss[3], ss[4]])?;
                Some(e.forward(ctx, frames)?)
            }
            None => None,
        };

        let (skips, f_m, f_s) = match (&spatial, &temporal) {
            (Some(sp), Some(tm)) => {
                let skips = tm
                    .skips
                    .iter()
                    .zip(&sp.skips)
                    .map(|(&ts, &ss)| fuse_skips(ts, ss, t))
                    .collect::<Result<Vec<_>>>()?;
                let f_s = self.tf.as_ref().expect("temporal branch").forward(ctx, tm.bottleneck)?;
                (skips, sp.bottleneck, f_s)
            }
            (Some(sp), None) => {
                let skips = sp.skips.iter().map(|&s| Var::concat(&[s, s], 1)).collect::<Result<Vec<_>>>()?;
                (skips, sp.bottleneck, sp.bottleneck)
            }
            (None, Some(tm)) => {
                let skips = tm
                    .skips
                    .iter()
                    .map(|&s| {
                        let c = collapse_frames(s, t)?;
                        Var::concat(&[c, c], 1)
                    })
                    .collect::<Result<Vec<_>>>()?;
                let f_s = self.tf.as_ref().expect("temporal branch").forward(ctx, tm.bottleneck)?;
                (skips, f_s, f_s)
            }
            (None, None) => unreachable!("every variant keeps one branch"),
        };
        let fused = self.stf.forward(ctx, f_m, f_s)?;
        self.decoder.forward(ctx, fused, &skips)
    }

    /// Forward pass on plain tensors.
    pub fn forward_tensors<'t, S: Scalar>(
        &self,
        ctx: &Ctx<'t, '_, S>,
        seq: Tensor<S>,
        minip: Tensor<S>,
    ) -> Result<ModelOutput<'t, S>> {
        let s = ctx.constant(seq);
        let m = ctx.constant(minip);
        self.forward(ctx, s, m)
    }
}
