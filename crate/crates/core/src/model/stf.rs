use super::layers::{Conv, Ctx};
use crate::autodiff::{PoolMode, UpsampleMode, Var};
use crate::error::{dim_err, Result};
use crate::param::ParamStore;
use crate::tensor::Scalar;

/// Spatio-temporal fusion of the spatial (`F_m`) and temporal (`F_s`)
/// bottlenecks.
///
/// Both inputs are max-pooled and passed through one shared 1x1 convolution
/// yielding Q, K, V. Each input gets a weight per pooled position,
/// `softmax_positions(sum_c Q*K / sqrt(c))`; the two weight maps are summed
/// and scale both V maps (broadcast over channels). The enhanced pair is
/// concatenated, upsampled back, and added to `concat(F_s, F_m)`.
#[derive(Clone, Debug)]
pub struct Stf {
    pub qkv: Conv,
    pub channels: usize,
}

impl Stf {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, c: usize) -> Result<Self> {
        Ok(Stf { qkv: Conv::new(store, &format!("{name}.qkv"), c, 3 * c, 1)?, channels: c })
    }

    fn project<'t, S: Scalar>(
        &self,
        ctx: &Ctx<'t, '_, S>,
        x: Var<'t, S>,
    ) -> Result<(Var<'t, S>, Var<'t, S>)> {
        let c = self.channels;
        let qkv = self.qkv.forward(ctx, x.maxpool2d(2, 2)?)?;
        let (q, k, v) = (qkv.narrow(1, 0, c)?, qkv.narrow(1, c, c)?, qkv.narrow(1, 2 * c, c)?);
        let s = q.shape();
        let (b, hw) = (s[0], s[2] * s[3]);
        // sum over channels = mean * c; times 1/sqrt(c) overall gives mean * sqrt(c)
        let scores = q
            .mul(k)?
            .pool_over_axis(1, PoolMode::Mean, c)?
            .scale(S::c((c as f64).sqrt()))?
            .reshape(&[b, hw])?;
        Ok((scores.softmax(1)?, v))
    }

    pub fn forward<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, f_m: Var<'t, S>, f_s: Var<'t, S>) -> Result<Var<'t, S>> {
        let (sm, ss) = (f_m.shape(), f_s.shape());
        if sm != ss || sm.len() != 4 || sm[1] != self.channels {
            return Err(dim_err!("fusion inputs {:?} and {:?} for {} channels", sm, ss, self.channels));
        }
        if sm[2] % 2 != 0 || sm[3] % 2 != 0 {
            return Err(dim_err!("fusion needs even spatial size, got {:?}", sm));
        }
        let (alpha_i, v_m) = self.project(ctx, f_m)?;
        let (alpha_s, v_s) = self.project(ctx, f_s)?;
        ctx.record_attention(|| "stf.alpha_i".into(), alpha_i);
        ctx.record_attention(|| "stf.alpha_s".into(), alpha_s);
        let vs = v_m.shape();
        let alpha = alpha_i.add(alpha_s)?.reshape(&[vs[0], 1, vs[2], vs[3]])?;
        let enhanced = Var::concat(&[alpha.mul(v_m)?, alpha.mul(v_s)?], 1)?;
        let up = enhanced.upsample2d(2, UpsampleMode::Bilinear)?;
        up.add(Var::concat(&[f_s, f_m], 1)?)
    }
}
