use crate::autodiff::{Op, Var};
use crate::error::{dim_err, Result};
use crate::tensor::{gemm, MatRef, Scalar, Tensor};

struct MatMul {
    trans_b: bool,
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
}

impl<S: Scalar> Op<S> for MatMul {
    fn name(&self) -> &'static str {
        "matmul"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let (a, b) = (inputs[0], inputs[1]);
        let (m, k, n) = (self.m, self.k, self.n);
        let mut ga = needs[0].then(|| Tensor::zeros(a.shape().to_vec()));
        let mut gb = needs[1].then(|| Tensor::zeros(b.shape().to_vec()));
        for bi in 0..self.batch {
            let g = MatRef::new(&grad.data()[bi * m * n..(bi + 1) * m * n], m, n);
            let am = MatRef::new(&a.data()[bi * m * k..(bi + 1) * m * k], m, k);
            let bslice = &b.data()[bi * k * n..(bi + 1) * k * n];
            // logical B is k x n; stored as n x k when trans_b
            let bm = if self.trans_b { MatRef::new(bslice, n, k).t() } else { MatRef::new(bslice, k, n) };
            if let Some(ga) = ga.as_mut() {
                gemm(S::one(), g, bm.t(), S::zero(), &mut ga.data_mut()[bi * m * k..(bi + 1) * m * k]);
            }
            if let Some(gb) = gb.as_mut() {
                let dst = &mut gb.data_mut()[bi * k * n..(bi + 1) * k * n];
                if self.trans_b {
                    // d(B^T) = A^T g  =>  dB = g^T A  (n x k)
                    gemm(S::one(), g.t(), am, S::zero(), dst);
                } else {
                    gemm(S::one(), am.t(), g, S::zero(), dst);
                }
            }
        }
        vec![ga, gb]
    }
}

struct Linear {
    rows: usize,
    d_in: usize,
    d_out: usize,
}

impl<S: Scalar> Op<S> for Linear {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let (x, w) = (inputs[0], inputs[1]);
        let g = MatRef::new(grad.data(), self.rows, self.d_out);
        let gx = needs[0].then(|| {
            let mut gx = Tensor::zeros(x.shape().to_vec());
            gemm(S::one(), g, MatRef::new(w.data(), self.d_out, self.d_in), S::zero(), gx.data_mut());
            gx
        });
        let gw = needs[1].then(|| {
            let mut gw = Tensor::zeros(w.shape().to_vec());
            gemm(S::one(), g.t(), MatRef::new(x.data(), self.rows, self.d_in), S::zero(), gw.data_mut());
            gw
        });
        let gb = needs[2].then(|| {
            let mut gb = Tensor::zeros([self.d_out]);
            let d = gb.data_mut();
            for row in grad.data().chunks_exact(self.d_out) {
                for (acc, &v) in d.iter_mut().zip(row) {
                    *acc = *acc + v;
                }
            }
            gb
        });
        vec![gx, gw, gb]
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    fn matmul_impl(self, other: Var<'t, S>, trans_b: bool) -> Result<Var<'t, S>> {
        let a = self.value();
        let b = other.value();
        let (ra, rb) = (a.rank(), b.rank());
        if ra < 2 || ra != rb || a.shape()[..ra - 2] != b.shape()[..rb - 2] {
            return Err(dim_err!("matmul operands {:?} and {:?}", a.shape(), b.shape()));
        }
        let (m, k) = (a.shape()[ra - 2], a.shape()[ra - 1]);
        let (kb, n) = if trans_b {
            (b.shape()[rb - 1], b.shape()[rb - 2])
        } else {
            (b.shape()[rb - 2], b.shape()[rb - 1])
        };
        if k != kb {
            return Err(dim_err!("matmul inner dims {} vs {} ({:?} x {:?})", k, kb, a.shape(), b.shape()));
        }
        let batch: usize = a.shape()[..ra - 2].iter().product();
        let mut out_shape = a.shape()[..ra - 2].to_vec();
        out_shape.extend([m, n]);
        let mut out = Tensor::zeros(out_shape);
        for bi in 0..batch {
            let am = MatRef::new(&a.data()[bi * m * k..(bi + 1) * m * k], m, k);
            let bslice = &b.data()[bi * k * n..(bi + 1) * k * n];
            let bm = if trans_b { MatRef::new(bslice, n, k).t() } else { MatRef::new(bslice, k, n) };
            gemm(S::one(), am, bm, S::zero(), &mut out.data_mut()[bi * m * n..(bi + 1) * m * n]);
        }
        self.tape().record(&[self, other], out, MatMul { trans_b, batch, m, k, n })
    }

    /// Batched `[.., m, k] x [.., k, n]`.
    pub fn matmul(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        self.matmul_impl(other, false)
    }

    /// Batched `[.., m, k] x [.., n, k]^T`.
    pub fn matmul_t(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        self.matmul_impl(other, true)
    }

    /// Affine map over the last axis: `x W^T + b` with `W: [d_out, d_in]`.
    pub fn linear(self, weight: Var<'t, S>, bias: Var<'t, S>) -> Result<Var<'t, S>> {
        let x = self.value();
        let w = weight.value();
        let b = bias.value();
        let d_in = *x.shape().last().ok_or_else(|| dim_err!("linear on a scalar"))?;
        if w.rank() != 2 || w.shape()[1] != d_in {
            return Err(dim_err!("linear weight {:?} for input {:?}", w.shape(), x.shape()));
        }
        let d_out = w.shape()[0];
        if b.shape() != [d_out] {
            return Err(dim_err!("linear bias {:?}, expected [{}]", b.shape(), d_out));
        }
        let rows = x.numel() / d_in;
        let mut out_shape = x.shape().to_vec();
        *out_shape.last_mut().unwrap() = d_out;
        let mut data: Vec<S> = b.data().iter().copied().cycle().take(rows * d_out).collect();
        gemm(
            S::one(),
            MatRef::new(x.data(), rows, d_in),
            MatRef::new(w.data(), d_out, d_in).t(),
            S::one(),
            &mut data,
        );
        let out = Tensor::new(out_shape, data)?;
        self.tape().record(&[self, weight, bias], out, Linear { rows, d_in, d_out })
    }
}
