use crate::autodiff::{Op, Var};
use crate::error::{dim_err, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

#[derive(Clone, Copy)]
struct ConvGeom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }
}

/// Unfolds one `[C, H, W]` image into `[C*k*k, OH*OW]`.
fn im2col<S: Scalar>(img: &[S], g: ConvGeom, cols: &mut [S]) {
    let ncols = g.cols();
    for c in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let out_row = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if iy < 0 || iy >= g.h as isize {
                        out_row.fill(S::zero());
                        continue;
                    }
                    let src = &img[(c * g.h + iy as usize) * g.w..(c * g.h + iy as usize + 1) * g.w];
                    for (ox, v) in out_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix >= g.w as isize { S::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into an image.
fn col2im<S: Scalar>(cols: &[S], g: ConvGeom, img: &mut [S]) {
    let ncols = g.cols();
    for c in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * ncols..(row + 1) * ncols];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.h as isize {
                        continue;
                    }
                    let base = (c * g.h + iy as usize) * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && ix < g.w as isize {
                            let d = &mut img[base + ix as usize];
                            *d = *d + src[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

struct Conv2d {
    geom: ConvGeom,
    out_channels: usize,
}

impl<S: Scalar> Op<S> for Conv2d {
    fn name(&self) -> &'static str {
        "conv2d"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let (x, w) = (inputs[0], inputs[1]);
        let g = self.geom;
        let batch = x.shape()[0];
        let (rows, ncols, oc) = (g.rows(), g.cols(), self.out_channels);
        let in_len = g.c * g.h * g.w;
        let out_len = oc * ncols;
        let wmat = MatRef::new(w.data(), oc, rows);

        let mut gx = needs[0].then(|| Tensor::zeros(x.shape().to_vec()));
        let mut gw = needs[1].then(|| Tensor::zeros(w.shape().to_vec()));
        let mut cols = vec![S::zero(); rows * ncols];
        for b in 0..batch {
            let gout = MatRef::new(&grad.data()[b * out_len..(b + 1) * out_len], oc, ncols);
            if let Some(gw) = gw.as_mut() {
                im2col(&x.data()[b * in_len..(b + 1) * in_len], g, &mut cols);
                gemm(S::one(), gout, MatRef::new(&cols, rows, ncols).t(), S::one(), gw.data_mut());
            }
            if let Some(gx) = gx.as_mut() {
                gemm(S::one(), wmat.t(), gout, S::zero(), &mut cols);
                col2im(&cols, g, &mut gx.data_mut()[b * in_len..(b + 1) * in_len]);
            }
        }
        let gb = needs[2].then(|| channel_sums(grad, batch, oc, ncols));
        vec![gx, gw, gb]
    }
}

fn channel_sums<S: Scalar>(grad: &Tensor<S>, batch: usize, channels: usize, plane: usize) -> Tensor<S> {
    let mut gb = Tensor::zeros([channels]);
    let d = gb.data_mut();
    for b in 0..batch {
        for (o, acc) in d.iter_mut().enumerate() {
            let start = (b * channels + o) * plane;
            *acc = grad.data()[start..start + plane].iter().fold(*acc, |s, &v| s + v);
        }
    }
    gb
}

struct ConvTranspose {
    in_channels: usize,
    out_channels: usize,
    k: usize,
    h: usize,
    w: usize,
}

impl ConvTranspose {
    /// `[Cout*k*k, H*W]` view of an output-shaped gradient.
    fn gather<S: Scalar>(&self, out: &[S]) -> Vec<S> {
        let (k, h, w) = (self.k, self.h, self.w);
        let (oh, ow) = (h * k, w * k);
        let mut m = vec![S::zero(); self.out_channels * k * k * h * w];
        for o in 0..self.out_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (o * k + ky) * k + kx;
                    for i in 0..h {
                        for j in 0..w {
                            m[row * h * w + i * w + j] = out[(o * oh + i * k + ky) * ow + j * k + kx];
                        }
                    }
                }
            }
        }
        m
    }
}

impl<S: Scalar> Op<S> for ConvTranspose {
    fn name(&self) -> &'static str {
        "conv_transpose2d"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let (x, w) = (inputs[0], inputs[1]);
        let batch = x.shape()[0];
        let hw = self.h * self.w;
        let okk = self.out_channels * self.k * self.k;
        let in_len = self.in_channels * hw;
        let out_len = okk * hw;
        let wmat = MatRef::new(w.data(), self.in_channels, okk);
        let mut gx = needs[0].then(|| Tensor::zeros(x.shape().to_vec()));
        let mut gw = needs[1].then(|| Tensor::zeros(w.shape().to_vec()));
        for b in 0..batch {
            let gm = self.gather(&grad.data()[b * out_len..(b + 1) * out_len]);
            let gm = MatRef::new(&gm, okk, hw);
            if let Some(gx) = gx.as_mut() {
                gemm(S::one(), wmat, gm, S::zero(), &mut gx.data_mut()[b * in_len..(b + 1) * in_len]);
            }
            if let Some(gw) = gw.as_mut() {
                let xm = MatRef::new(&x.data()[b * in_len..(b + 1) * in_len], self.in_channels, hw);
                gemm(S::one(), xm, gm.t(), S::one(), gw.data_mut());
            }
        }
        let gb = needs[2].then(|| channel_sums(grad, batch, self.out_channels, hw * self.k * self.k));
        vec![gx, gw, gb]
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    /// 2-D cross-correlation. `weight: [C_out, C_in, k, k]`, `bias: [C_out]`.
    pub fn conv2d(self, weight: Var<'t, S>, bias: Var<'t, S>, stride: usize, padding: usize) -> Result<Var<'t, S>> {
        let x = self.value();
        let w = weight.value();
        let b = bias.value();
        if x.rank() != 4 || w.rank() != 4 {
            return Err(dim_err!("conv2d expects rank-4 input and weight, got {:?} and {:?}", x.shape(), w.shape()));
        }
        let (batch, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (oc, wc, k, k2) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
        if wc != c {
            return Err(dim_err!("conv2d input has {} channels, weight expects {}", c, wc));
        }
        if k != k2 || stride == 0 {
            return Err(dim_err!("conv2d needs a square kernel and stride >= 1, got {}x{} / {}", k, k2, stride));
        }
        if b.shape() != [oc] {
            return Err(dim_err!("conv2d bias {:?}, expected [{}]", b.shape(), oc));
        }
        if h + 2 * padding < k || wd + 2 * padding < k {
            return Err(dim_err!("conv2d kernel {} larger than padded input {}x{}", k, h, wd));
        }
        let geom = ConvGeom {
            c,
            h,
            w: wd,
            k,
            stride,
            pad: padding,
            oh: (h + 2 * padding - k) / stride + 1,
            ow: (wd + 2 * padding - k) / stride + 1,
        };
        let (rows, ncols) = (geom.rows(), geom.cols());
        let in_len = c * h * wd;
        let mut out = vec![S::zero(); batch * oc * ncols];
        let mut cols = vec![S::zero(); rows * ncols];
        for bi in 0..batch {
            let dst = &mut out[bi * oc * ncols..(bi + 1) * oc * ncols];
            for (o, chunk) in dst.chunks_exact_mut(ncols).enumerate() {
                chunk.fill(b.data()[o]);
            }
            im2col(&x.data()[bi * in_len..(bi + 1) * in_len], geom, &mut cols);
            gemm(S::one(), MatRef::new(w.data(), oc, rows), MatRef::new(&cols, rows, ncols), S::one(), dst);
        }
        let out = Tensor::new([batch, oc, geom.oh, geom.ow], out)?;
        self.tape().record(&[self, weight, bias], out, Conv2d { geom, out_channels: oc })
    }

    /// Transposed convolution with stride equal to the kernel size (non-overlapping
    /// upsampling). `weight: [C_in, C_out, k, k]`, `bias: [C_out]`.
    pub fn conv_transpose2d(self, weight: Var<'t, S>, bias: Var<'t, S>) -> Result<Var<'t, S>> {
        let x = self.value();
        let w = weight.value();
        let b = bias.value();
        if x.rank() != 4 || w.rank() != 4 || w.shape()[2] != w.shape()[3] {
            return Err(dim_err!("conv_transpose2d shapes {:?} / {:?}", x.shape(), w.shape()));
        }
        let (batch, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
        let (ic, oc, k) = (w.shape()[0], w.shape()[1], w.shape()[2]);
        if ic != c {
            return Err(dim_err!("conv_transpose2d input has {} channels, weight expects {}", c, ic));
        }
        if b.shape() != [oc] {
            return Err(dim_err!("conv_transpose2d bias {:?}, expected [{}]", b.shape(), oc));
        }
        let op = ConvTranspose { in_channels: c, out_channels: oc, k, h, w: wd };
        let hw = h * wd;
        let okk = oc * k * k;
        let (oh, ow) = (h * k, wd * k);
        let mut out = vec![S::zero(); batch * oc * oh * ow];
        let mut ymat = vec![S::zero(); okk * hw];
        for bi in 0..batch {
            let xm = MatRef::new(&x.data()[bi * c * hw..(bi + 1) * c * hw], c, hw);
            gemm(S::one(), MatRef::new(w.data(), c, okk).t(), xm, S::zero(), &mut ymat);
            let dst = &mut out[bi * oc * oh * ow..(bi + 1) * oc * oh * ow];
            for o in 0..oc {
                for ky in 0..k {
                    for kx in 0..k {
                        let row = (o * k + ky) * k + kx;
                        for i in 0..h {
                            for j in 0..wd {
                                dst[(o * oh + i * k + ky) * ow + j * k + kx] =
                                    ymat[row * hw + i * wd + j] + b.data()[o];
                            }
                        }
                    }
                }
            }
        }
        let out = Tensor::new([batch, oc, oh, ow], out)?;
        self.tape().record(&[self, weight, bias], out, op)
    }
}

#[cfg(test)]
mod tests {
    use crate::autodiff::Tape;
    use crate::tensor::Tensor;

    #[test]
    fn identity_kernel_preserves_input() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::from_fn([1, 1, 4, 5], |i| (i as f64 * 0.7).sin()));
        let w = tape.constant(Tensor::from_fn([1, 1, 3, 3], |i| if i == 4 { 1.0 } else { 0.0 }));
        let b = tape.constant(Tensor::zeros([1]));
        let y = x.conv2d(w, b, 1, 1).unwrap();
        assert_eq!(*y.value(), *x.value());
    }

    #[test]
    fn impulse_with_ones_kernel_gives_block() {
        let tape = Tape::<f64>::new();
        let mut img = Tensor::zeros([1, 1, 5, 5]);
        img.data_mut()[12] = 1.0;
        let x = tape.constant(img);
        let w = tape.constant(Tensor::ones([1, 1, 3, 3]));
        let b = tape.constant(Tensor::zeros([1]));
        let y = x.conv2d(w, b, 1, 1).unwrap().value();
        for r in 0..5 {
            for c in 0..5 {
                let expect = if (1..=3).contains(&r) && (1..=3).contains(&c) { 1.0 } else { 0.0 };
                assert_eq!(y.at(&[0, 0, r, c]), expect);
            }
        }
    }

    #[test]
    fn output_size_follows_stride_formula() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros([2, 3, 7, 6]));
        let w = tape.constant(Tensor::zeros([4, 3, 3, 3]));
        let b = tape.constant(Tensor::zeros([4]));
        let y = x.conv2d(w, b, 2, 1).unwrap();
        assert_eq!(y.shape(), vec![2, 4, 4, 3]);
    }

    #[test]
    fn channel_mismatch_is_dimension_error() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros([1, 2, 4, 4]));
        let w = tape.constant(Tensor::zeros([4, 3, 3, 3]));
        let b = tape.constant(Tensor::zeros([4]));
        assert!(x.conv2d(w, b, 1, 1).is_err());
    }

    #[test]
    fn transposed_conv_scatters_blocks() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new([1, 1, 1, 2], vec![1.0, 2.0]).unwrap());
        let w = tape.constant(Tensor::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = tape.constant(Tensor::new([1], vec![0.5]).unwrap());
        let y = x.conv_transpose2d(w, b).unwrap().value();
        assert_eq!(y.shape(), &[1, 1, 2, 4]);
        assert_eq!(y.data(), &[1.5, 2.5, 2.5, 4.5, 3.5, 4.5, 6.5, 8.5]);
    }
}
