//! Parameterized building blocks and the forward context that binds them.

use std::cell::RefCell;
use std::sync::Arc;

use super::config::norm_groups;
use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::param::{Init, ParamId, ParamStore};
use crate::tensor::{Scalar, Tensor};

pub const NORM_EPS: f64 = 1e-5;

/// One softmax output captured during a forward pass.
#[derive(Clone, Debug)]
pub struct AttentionRecord<S> {
    pub site: String,
    /// Weights with the normalized axis last.
    pub weights: Arc<Tensor<S>>,
}

/// Tape and parameters for one forward pass, optionally recording attention.
pub struct Ctx<'t, 'p, S: Scalar> {
    pub tape: &'t Tape<S>,
    pub store: &'p ParamStore<S>,
    attention: Option<RefCell<Vec<AttentionRecord<S>>>>,
}

impl<'t, 'p, S: Scalar> Ctx<'t, 'p, S> {
    pub fn new(tape: &'t Tape<S>, store: &'p ParamStore<S>) -> Self {
        Ctx { tape, store, attention: None }
    }

    pub fn with_attention_capture(tape: &'t Tape<S>, store: &'p ParamStore<S>) -> Self {
        Ctx { tape, store, attention: Some(RefCell::new(Vec::new())) }
    }

    pub fn p(&self, id: ParamId) -> Var<'t, S> {
        self.tape.param(self.store, id)
    }

    pub fn constant(&self, t: Tensor<S>) -> Var<'t, S> {
        self.tape.constant(t)
    }

    pub(crate) fn record_attention(&self, site: impl FnOnce() -> String, weights: Var<'t, S>) {
        if let Some(log) = &self.attention {
            log.borrow_mut().push(AttentionRecord { site: site(), weights: weights.value() });
        }
    }

    pub fn take_attention(&self) -> Vec<AttentionRecord<S>> {
        self.attention.as_ref().map(|l| std::mem::take(&mut *l.borrow_mut())).unwrap_or_default()
    }
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub kernel: usize,
}

impl Conv {
    pub fn new<S: Scalar>(
        store: &mut ParamStore<S>,
        name: &str,
        cin: usize,
        cout: usize,
        kernel: usize,
    ) -> Result<Self> {
        let fan_in = cin * kernel * kernel;
        Ok(Conv {
            weight: store.add(format!("{name}.weight"), &[cout, cin, kernel, kernel], Init::KaimingUniform { fan_in })?,
            bias: store.add(format!("{name}.bias"), &[cout], Init::Zeros)?,
            kernel,
        })
    }

    /// Stride 1, size-preserving padding.
    pub fn forward<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
        x.conv2d(ctx.p(self.weight), ctx.p(self.bias), 1, (self.kernel - 1) / 2)
    }
}

/// 2x2 stride-2 transposed convolution.
#[derive(Clone, Debug)]
pub struct UpConv {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl UpConv {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, cin: usize, cout: usize) -> Result<Self> {
        Ok(UpConv {
            weight: store.add(format!("{name}.weight"), &[cin, cout, 2, 2], Init::KaimingUniform { fan_in: cin })?,
            bias: store.add(format!("{name}.bias"), &[cout], Init::Zeros)?,
        })
    }

    pub fn forward<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
        x.conv_transpose2d(ctx.p(self.weight), ctx.p(self.bias))
    }
}

/// Affine normalization; `groups == 1` on `[N, c]` is layer normalization.
#[derive(Clone, Debug)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub groups: usize,
}

impl Norm {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, channels: usize, groups: usize) -> Result<Self> {
        Ok(Norm {
            gamma: store.add(format!("{name}.gamma"), &[channels], Init::Ones)?,
            beta: store.add(format!("{name}.beta"), &[channels], Init::Zeros)?,
            groups,
        })
    }

    pub fn forward<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
        x.group_norm(self.groups, ctx.p(self.gamma), ctx.p(self.beta), NORM_EPS)
    }

    /// Normalizes the last axis of any tensor.
    pub fn forward_last_axis<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
        let shape = x.shape();
        let c = *shape.last().expect("rank >= 1");
        let rows = x.value().numel() / c;
        self.forward(ctx, x.reshape(&[rows, c])?)?.reshape(&shape)
    }
}

/// Two rounds of 3x3 convolution, group normalization and GELU.
#[derive(Clone, Debug)]
pub struct DoubleConv {
    pub conv1: Conv,
    pub norm1: Norm,
    pub conv2: Conv,
    pub norm2: Norm,
}

impl DoubleConv {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, cin: usize, cout: usize) -> Result<Self> {
        let g = norm_groups(cout);
        Ok(DoubleConv {
            conv1: Conv::new(store, &format!("{name}.conv1"), cin, cout, 3)?,
            norm1: Norm::new(store, &format!("{name}.norm1"), cout, g)?,
            conv2: Conv::new(store, &format!("{name}.conv2"), cout, cout, 3)?,
            norm2: Norm::new(store, &format!("{name}.norm2"), cout, g)?,
        })
    }

    pub fn forward<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
        let x = self.norm1.forward(ctx, self.conv1.forward(ctx, x)?)?.gelu()?;
        self.norm2.forward(ctx, self.conv2.forward(ctx, x)?)?.gelu()
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, din: usize, dout: usize) -> Result<Self> {
        Ok(Linear {
            weight: store.add(format!("{name}.weight"), &[dout, din], Init::KaimingUniform { fan_in: din })?,
            bias: store.add(format!("{name}.bias"), &[dout], Init::Zeros)?,
        })
    }

    pub fn forward<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, x: Var<'t, S>) -> Result<Var<'t, S>> {
        x.linear(ctx.p(self.weight), ctx.p(self.bias))
    }
}

/// Multi-head scaled dot-product self-attention over the middle axis of
/// `[N, L, c]`, with an output projection.
#[derive(Clone, Debug)]
pub struct SelfAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
    pub heads: usize,
}

impl SelfAttention {
    pub fn new<S: Scalar>(store: &mut ParamStore<S>, name: &str, c: usize, heads: usize) -> Result<Self> {
        Ok(SelfAttention {
            q: Linear::new(store, &format!("{name}.q"), c, c)?,
            k: Linear::new(store, &format!("{name}.k"), c, c)?,
            v: Linear::new(store, &format!("{name}.v"), c, c)?,
            out: Linear::new(store, &format!("{name}.out"), c, c)?,
            heads,
        })
    }

    pub fn forward<'t, S: Scalar>(&self, ctx: &Ctx<'t, '_, S>, x: Var<'t, S>, site: &str) -> Result<Var<'t, S>> {
        let shape = x.shape();
        let (n, l, c) = (shape[0], shape[1], shape[2]);
        let h = self.heads;
        let dh = c / h;
        let split = |t: Var<'t, S>| -> Result<Var<'t, S>> {
            t.reshape(&[n, l, h, dh])?.permute(&[0, 2, 1, 3])?.reshape(&[n * h, l, dh])
        };
        let q = split(self.q.forward(ctx, x)?)?;
        let k = split(self.k.forward(ctx, x)?)?;
        let v = split(self.v.forward(ctx, x)?)?;
        let scores = q.matmul_t(k)?.scale(S::c(1.0 / (dh as f64).sqrt()))?;
        let attn = scores.softmax(2)?;
        ctx.record_attention(|| site.to_string(), attn);
        let y = attn.matmul(v)?.reshape(&[n, h, l, dh])?.permute(&[0, 2, 1, 3])?.reshape(&[n, l, c])?;
        self.out.forward(ctx, y)
    }
}
