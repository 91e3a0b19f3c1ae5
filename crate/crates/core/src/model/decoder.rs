use super::config::ModelConfig;
use super::layers::{Conv, Ctx, DoubleConv, UpConv};
use crate::autodiff::Var;
use crate::error::{dim_err, Result};
use crate::param::ParamStore;
use crate::tensor::Scalar;

/// Class logits at full, half and quarter resolution.
#[derive(Clone, Copy, Debug)]
pub struct ModelOutput<'t, S: Scalar> {
    pub logits_full: Var<'t, S>,
    pub logits_half: Var<'t, S>,
    pub logits_quarter: Var<'t, S>,
}

impl<'t, S: Scalar> ModelOutput<'t, S> {
    /// Heads ordered by downsampling exponent 0, 1, 2.
    pub fn heads(&self) -> [Var<'t, S>; 3] {
        [self.logits_full, self.logits_half, self.logits_quarter]
    }
}

/// Upsampling path: per stage a 2x2 transposed convolution, concatenation of
/// the fused skip, and a double convolution block. Stage outputs at level
/// `i` carry `base_channels * 2^i` channels.
#[derive(Clone, Debug)]
pub struct Decoder {
    /// Deepest first.
    pub ups: Vec<UpConv>,
    pub blocks: Vec<DoubleConv>,
    /// Full, half, quarter.
    pub heads: Vec<Conv>,
}

impl Decoder {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let mut ups = Vec::new();
        let mut blocks = Vec::new();
        let mut cin = 2 * cfg.bottleneck_channels();
        for level in (0..cfg.levels - 1).rev() {
            let c = cfg.channels(level);
            ups.push(UpConv::new(store, &format!("{name}.up{level}"), cin, c)?);
            blocks.push(DoubleConv::new(store, &format!("{name}.level{level}"), 3 * c, c)?);
            cin = c;
        }
        let heads = (0..3)
            .map(|a| Conv::new(store, &format!("{name}.head{a}"), cfg.channels(a), cfg.num_classes, 1))
            .collect::<Result<_>>()?;
        Ok(Decoder { ups, blocks, heads })
    }

    /// `skips` are the fused skips, shallowest first.
    pub fn forward<'t, S: Scalar>(
        &self,
        ctx: &Ctx<'t, '_, S>,
        bottleneck: Var<'t, S>,
        skips: &[Var<'t, S>],
    ) -> Result<ModelOutput<'t, S>> {
        if skips.len() != self.blocks.len() {
            return Err(dim_err!("decoder needs {} skips, got {}", self.blocks.len(), skips.len()));
        }
        let mut x = bottleneck;
        let mut outputs = vec![None; skips.len()];
        for (stage, (up, block)) in self.ups.iter().zip(&self.blocks).enumerate() {
            let level = skips.len() - 1 - stage;
            let u = up.forward(ctx, x)?;
            let skip = skips[level];
            let (us, ss) = (u.shape(), skip.shape());
            if us[0] != ss[0] || us[2..] != ss[2..] || ss[1] != 2 * us[1] {
                return Err(dim_err!("skip {:?} does not match upsampled {:?} at level {}", ss, us, level));
            }
            x = block.forward(ctx, Var::concat(&[u, skip], 1)?)?;
            outputs[level] = Some(x);
        }
        let head = |a: usize| -> Result<Var<'t, S>> { self.heads[a].forward(ctx, outputs[a].expect("stage ran")) };
        Ok(ModelOutput { logits_full: head(0)?, logits_half: head(1)?, logits_quarter: head(2)? })
    }
}
