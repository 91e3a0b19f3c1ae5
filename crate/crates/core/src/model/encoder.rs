use super::config::ModelConfig;
use super::layers::{Ctx, DoubleConv};
use crate::autodiff::{PoolMode, Var};
use crate::error::{dim_err, Result};
use crate::param::ParamStore;
use crate::tensor::Scalar;

/// Skip features (shallowest first) and the bottleneck of one encoder pass.
#[derive(Clone, Debug)]
pub struct EncoderState<'t, S: Scalar> {
    pub skips: Vec<Var<'t, S>>,
    pub bottleneck: Var<'t, S>,
}

/// Five-level convolutional encoder on `[N, 1, H, W]`. Level 0 lifts to
/// `base_channels`; every later level max-pools by 2 and doubles channels.
#[derive(Clone, Debug)]
pub struct Encoder {
    pub blocks: Vec<DoubleConv>,
}

impl Encoder {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let blocks = (0..cfg.levels)
            .map(|i| {
                let cin = if i == 0 { 1 } else { cfg.channels(i - 1) };
                DoubleConv::new(store, &format!("{name}.level{i}"), cin, cfg.channels(i))
            })
            .collect::<Result<_>>()?;
        Ok(Encoder { blocks })
    }

    pub fn forward<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, x: Var<'t, S>) -> Result<EncoderState<'t, S>> {
        let shape = x.shape();
        let m = 1 << (self.blocks.len() - 1);
        if shape.len() != 4 || shape[1] != 1 || !shape[2].is_multiple_of(m) || !shape[3].is_multiple_of(m) {
            return Err(dim_err!("encoder input {:?}: need [N, 1, H, W] with H, W divisible by {}", shape, m));
        }
        let mut skips = Vec::with_capacity(self.blocks.len() - 1);
        let mut h = x;
        for (i, block) in self.blocks.iter().enumerate() {
            if i > 0 {
                skips.push(h);
                h = h.maxpool2d(2, 2)?;
            }
            h = block.forward(ctx, h)?;
        }
        Ok(EncoderState { skips, bottleneck: h })
    }
}

/// Collapses `[(B*T), c, h, w]` over `T` with a max.
pub fn collapse_frames<'t, S: Scalar>(x: Var<'t, S>, frames: usize) -> Result<Var<'t, S>> {
    let s = x.shape();
    if s.len() != 4 || !s[0].is_multiple_of(frames) {
        return Err(dim_err!("cannot split {:?} into {} frames", s, frames));
    }
    let b = s[0] / frames;
    x.reshape(&[b, frames, s[1], s[2], s[3]])?
        .pool_over_axis(1, PoolMode::Max, frames)?
        .reshape(&[b, s[1], s[2], s[3]])
}

/// Temporal max of a per-frame skip, concatenated with the spatial skip:
/// `[(B*T), c, h, w]` and `[B, c, h, w]` give `[B, 2c, h, w]`.
pub fn fuse_skips<'t, S: Scalar>(teb_skip: Var<'t, S>, seb_skip: Var<'t, S>, frames: usize) -> Result<Var<'t, S>> {
    let (ts, ss) = (teb_skip.shape(), seb_skip.shape());
    if ts.len() != 4 || ss.len() != 4 || ts[1..] != ss[1..] || ts[0] != ss[0] * frames {
        return Err(dim_err!("skip shapes {:?} (x{} frames) and {:?} do not match", ts, frames, ss));
    }
    Var::concat(&[collapse_frames(teb_skip, frames)?, seb_skip], 1)
}
