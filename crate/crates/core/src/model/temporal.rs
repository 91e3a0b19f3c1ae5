use super::config::ModelConfig;
use super::encoder::collapse_frames;
use super::layers::{Ctx, Linear, Norm, SelfAttention};
use crate::autodiff::Var;
use crate::error::{dim_err, Result};
use crate::param::{Init, ParamId, ParamStore};
use crate::tensor::Scalar;

/// One TemporalFormer layer: position encoding, then pre-normalized temporal
/// attention, spatial attention and MLP, each with a residual connection.
#[derive(Clone, Debug)]
pub struct TfLayer {
    pub pos: ParamId,
    pub norm_t: Norm,
    pub attn_t: SelfAttention,
    pub norm_s: Norm,
    pub attn_s: SelfAttention,
    pub norm_mlp: Norm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl TfLayer {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let c = cfg.bottleneck_channels();
        let hidden = cfg.mlp_hidden();
        Ok(TfLayer {
            pos: store.add(format!("{name}.pos"), &[1, cfg.frames, c], Init::Normal { std: 0.02 })?,
            norm_t: Norm::new(store, &format!("{name}.norm_t"), c, 1)?,
            attn_t: SelfAttention::new(store, &format!("{name}.attn_t"), c, cfg.tf_heads)?,
            norm_s: Norm::new(store, &format!("{name}.norm_s"), c, 1)?,
            attn_s: SelfAttention::new(store, &format!("{name}.attn_s"), c, cfg.tf_heads)?,
            norm_mlp: Norm::new(store, &format!("{name}.norm_mlp"), c, 1)?,
            fc1: Linear::new(store, &format!("{name}.fc1"), c, hidden)?,
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, c)?,
        })
    }

    /// Adds the position encoding to temporal tokens `[N, T, c]`.
    pub fn add_position<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
        x.add(ctx.p(self.pos))
    }

    /// `x + attn(norm(x))` over the frame axis of `[N, T, c]`.
    pub fn temporal_sublayer<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, x: Var<'t, S>, site: &str) -> Result<Var<'t, S>> {
        x.add(self.attn_t.forward(ctx, self.norm_t.forward_last_axis(ctx, x)?, site)?)
    }

    /// `x + attn(norm(x))` over the position axis of `[N, hw, c]`.
    pub fn spatial_sublayer<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, x: Var<'t, S>, site: &str) -> Result<Var<'t, S>> {
        x.add(self.attn_s.forward(ctx, self.norm_s.forward_last_axis(ctx, x)?, site)?)
    }

    pub fn mlp_sublayer<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
        let h = self.fc1.forward(ctx, self.norm_mlp.forward_last_axis(ctx, x)?)?.gelu()?;
        x.add(self.fc2.forward(ctx, h)?)
    }

    /// Maps `[B, h, w, T, c]` tokens to the same layout.
    fn forward<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, x: Var<'t, S>, index: usize) -> Result<Var<'t, S>> {
        let s = x.shape();
        let (b, h, w, t, c) = (s[0], s[1], s[2], s[3], s[4]);
        let tokens = x.reshape(&[b * h * w, t, c])?;
        let tokens = self.add_position(ctx, tokens)?;
        let tokens = self.temporal_sublayer(ctx, tokens, &format!("tf{index}.temporal"))?;
        // [B, h, w, T, c] -> [B, T, h, w, c] -> [(B*T), hw, c]
        let spatial = tokens.reshape(&[b, h, w, t, c])?.permute(&[0, 3, 1, 2, 4])?.reshape(&[b * t, h * w, c])?;
        let spatial = self.spatial_sublayer(ctx, spatial, &format!("tf{index}.spatial"))?;
        let spatial = self.mlp_sublayer(ctx, spatial)?;
        spatial.reshape(&[b, t, h, w, c])?.permute(&[0, 2, 3, 1, 4])
    }
}

/// Stack of [`TfLayer`]s over the temporal bottleneck, followed by a
/// temporal max collapse: `[(B*T), c, h, w]` to `[B, c, h, w]`.
#[derive(Clone, Debug)]
pub struct TemporalFormer {
    pub layers: Vec<TfLayer>,
    pub frames: usize,
}

impl TemporalFormer {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let layers = (0..cfg.tf_layers)
            .map(|i| TfLayer::new(store, &format!("{name}.layer{i}"), cfg))
            .collect::<Result<_>>()?;
        Ok(TemporalFormer { layers, frames: cfg.frames })
    }

    pub fn forward<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, f_s: Var<'t, S>) -> Result<Var<'t, S>> {
        let s = f_s.shape();
        let t = self.frames;
        if s.len() != 4 || !s[0].is_multiple_of(t) {
            return Err(dim_err!("TemporalFormer input {:?} is not [(B*{}), c, h, w]", s, t));
        }
        let (b, c, h, w) = (s[0] / t, s[1], s[2], s[3]);
        // [(B*T), c, h, w] -> [B, T, c, h, w] -> [B, h, w, T, c]
        let mut x = f_s.reshape(&[b, t, c, h, w])?.permute(&[0, 3, 4, 1, 2])?;
        for (i, layer) in self.layers.iter().enumerate() {
            x = layer.forward(ctx, x, i)?;
        }
        let x = x.permute(&[0, 3, 4, 1, 2])?.reshape(&[b * t, c, h, w])?;
        collapse_frames(x, t)
    }
}
