use crate::autodiff::{Op, Var};
use crate::error::{dim_err, Result};
use crate::tensor::{split_axis, Scalar, Tensor};

/// Reduction used by [`Var::pool_over_axis`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Mean,
}

/// Interpolation used by [`Var::upsample2d`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UpsampleMode {
    Nearest,
    /// Half-pixel centres: source coordinate `(dst + 0.5) / factor - 0.5`,
    /// clamped to the image, linear weights between the two neighbours.
    Bilinear,
}

/// Routes the gradient of each output element to one input element.
struct ArgmaxRoute {
    name: &'static str,
    argmax: Vec<usize>,
}

impl<S: Scalar> Op<S> for ArgmaxRoute {
    fn name(&self) -> &'static str {
        self.name
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let mut gx = Tensor::zeros(inputs[0].shape().to_vec());
        let d = gx.data_mut();
        for (&src, &g) in self.argmax.iter().zip(grad.data()) {
            d[src] = d[src] + g;
        }
        vec![Some(gx)]
    }
}

struct AxisMean {
    axis: usize,
    factor: usize,
}

impl<S: Scalar> Op<S> for AxisMean {
    fn name(&self) -> &'static str {
        "pool_over_axis_mean"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let (_, n, inner) = split_axis(inputs[0].shape(), self.axis);
        let m = n / self.factor;
        let inv = S::one() / S::c(self.factor as f64);
        let gx = Tensor::from_fn(inputs[0].shape().to_vec(), |flat| {
            let i = flat % inner;
            let k = (flat / inner) % n;
            let o = flat / (inner * n);
            grad.data()[(o * m + k / self.factor) * inner + i] * inv
        });
        vec![Some(gx)]
    }
}

/// Per output index along one axis: (low source, high source, weight of high).
fn bilinear_table(n: usize, factor: usize) -> Vec<(usize, usize, f64)> {
    (0..n * factor)
        .map(|d| {
            let src = ((d as f64 + 0.5) / factor as f64 - 0.5).clamp(0.0, (n - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}

struct Upsample {
    factor: usize,
    mode: UpsampleMode,
}

impl Upsample {
    /// Applies the interpolation (or its adjoint when `adjoint`) on `[N, h, w]` planes.
    fn apply<S: Scalar>(&self, src: &[S], planes: usize, h: usize, w: usize, adjoint: bool) -> Vec<S> {
        let f = self.factor;
        let (oh, ow) = (h * f, w * f);
        let mut dst = vec![S::zero(); planes * if adjoint { h * w } else { oh * ow }];
        let (ty, tx) = match self.mode {
            UpsampleMode::Nearest => (
                (0..oh).map(|y| (y / f, y / f, 0.0)).collect::<Vec<_>>(),
                (0..ow).map(|x| (x / f, x / f, 0.0)).collect::<Vec<_>>(),
            ),
            UpsampleMode::Bilinear => (bilinear_table(h, f), bilinear_table(w, f)),
        };
        for p in 0..planes {
            for (y, &(y0, y1, wy)) in ty.iter().enumerate() {
                for (x, &(x0, x1, wx)) in tx.iter().enumerate() {
                    let taps = [
                        (y0, x0, (1.0 - wy) * (1.0 - wx)),
                        (y0, x1, (1.0 - wy) * wx),
                        (y1, x0, wy * (1.0 - wx)),
                        (y1, x1, wy * wx),
                    ];
                    let o = (p * oh + y) * ow + x;
                    for (sy, sx, wgt) in taps {
                        if wgt == 0.0 {
                            continue;
                        }
                        let i = (p * h + sy) * w + sx;
                        let wgt = S::c(wgt);
                        if adjoint {
                            dst[i] = dst[i] + src[o] * wgt;
                        } else {
                            dst[o] = dst[o] + src[i] * wgt;
                        }
                    }
                }
            }
        }
        dst
    }
}

impl<S: Scalar> Op<S> for Upsample {
    fn name(&self) -> &'static str {
        "upsample2d"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let s = inputs[0].shape();
        let data = self.apply(grad.data(), s[0] * s[1], s[2], s[3], true);
        vec![Some(Tensor::new(s.to_vec(), data).expect("upsample adjoint shape"))]
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    /// Spatial max pooling on `[B, C, H, W]`. The gradient goes to the first
    /// maximum in row-major window order.
    pub fn maxpool2d(self, window: usize, stride: usize) -> Result<Var<'t, S>> {
        let x = self.value();
        if x.rank() != 4 || window == 0 || stride == 0 {
            return Err(dim_err!("maxpool2d on {:?} with window {} stride {}", x.shape(), window, stride));
        }
        let (b, c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        if h < window || w < window || !(h - window).is_multiple_of(stride) || !(w - window).is_multiple_of(stride) {
            return Err(dim_err!("maxpool2d: {}x{} not divisible by window {} / stride {}", h, w, window, stride));
        }
        let (oh, ow) = ((h - window) / stride + 1, (w - window) / stride + 1);
        let mut out = Vec::with_capacity(b * c * oh * ow);
        let mut argmax = Vec::with_capacity(b * c * oh * ow);
        let data = x.data();
        for plane in 0..b * c {
            let base = plane * h * w;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = base + oy * stride * w + ox * stride;
                    for dy in 0..window {
                        for dx in 0..window {
                            let i = base + (oy * stride + dy) * w + ox * stride + dx;
                            if data[i] > data[best] {
                                best = i;
                            }
                        }
                    }
                    out.push(data[best]);
                    argmax.push(best);
                }
            }
        }
        let out = Tensor::new([b, c, oh, ow], out)?;
        self.tape().record(&[self], out, ArgmaxRoute { name: "maxpool2d", argmax })
    }

    /// Pools groups of `factor` consecutive entries along `axis`.
    /// `factor == shape[axis]` collapses the axis to length 1.
    pub fn pool_over_axis(self, axis: usize, mode: PoolMode, factor: usize) -> Result<Var<'t, S>> {
        let x = self.value();
        if axis >= x.rank() {
            return Err(dim_err!("pool axis {} out of range for {:?}", axis, x.shape()));
        }
        let (outer, n, inner) = split_axis(x.shape(), axis);
        if factor == 0 || factor > n || n % factor != 0 {
            return Err(dim_err!("pool factor {} does not divide axis of size {}", factor, n));
        }
        let m = n / factor;
        let mut out_shape = x.shape().to_vec();
        out_shape[axis] = m;
        let data = x.data();
        let mut out = vec![S::zero(); outer * m * inner];
        match mode {
            PoolMode::Max => {
                let mut argmax = vec![0; out.len()];
                for o in 0..outer {
                    for g in 0..m {
                        for i in 0..inner {
                            let mut best = (o * n + g * factor) * inner + i;
                            for k in 1..factor {
                                let idx = (o * n + g * factor + k) * inner + i;
                                if data[idx] > data[best] {
                                    best = idx;
                                }
                            }
                            let dst = (o * m + g) * inner + i;
                            out[dst] = data[best];
                            argmax[dst] = best;
                        }
                    }
                }
                let out = Tensor::new(out_shape, out)?;
                self.tape().record(&[self], out, ArgmaxRoute { name: "pool_over_axis_max", argmax })
            }
            PoolMode::Mean => {
                let inv = S::one() / S::c(factor as f64);
                for o in 0..outer {
                    for g in 0..m {
                        for i in 0..inner {
                            let total = (0..factor)
                                .fold(S::zero(), |acc, k| acc + data[(o * n + g * factor + k) * inner + i]);
                            out[(o * m + g) * inner + i] = total * inv;
                        }
                    }
                }
                let out = Tensor::new(out_shape, out)?;
                self.tape().record(&[self], out, AxisMean { axis, factor })
            }
        }
    }

    /// Integer-factor spatial upsampling of `[B, C, h, w]`.
    pub fn upsample2d(self, factor: usize, mode: UpsampleMode) -> Result<Var<'t, S>> {
        let x = self.value();
        if x.rank() != 4 || factor == 0 {
            return Err(dim_err!("upsample2d on {:?} by {}", x.shape(), factor));
        }
        let s = x.shape();
        let op = Upsample { factor, mode };
        let data = op.apply(x.data(), s[0] * s[1], s[2], s[3], false);
        let out = Tensor::new([s[0], s[1], s[2] * factor, s[3] * factor], data)?;
        self.tape().record(&[self], out, op)
    }
}
