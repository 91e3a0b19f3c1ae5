use crate::autodiff::{Op, Var};
use crate::error::{dim_err, Error, Result};
use crate::tensor::{split_axis, strides, Scalar, Tensor};

struct Reshape;

impl<S: Scalar> Op<S> for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        vec![Some(grad.clone().reshaped(inputs[0].shape().to_vec()).expect("same numel"))]
    }
}

/// Applies an axis permutation to a contiguous buffer.
pub(crate) fn permute_data<S: Scalar>(t: &Tensor<S>, perm: &[usize]) -> Tensor<S> {
    let in_shape = t.shape();
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let in_strides = strides(in_shape);
    // stride in the input for each output axis
    let gather: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n = t.numel();
    let mut out = Vec::with_capacity(n);
    let rank = out_shape.len();
    let mut idx = vec![0usize; rank];
    let mut src = 0usize;
    let data = t.data();
    for _ in 0..n {
        out.push(data[src]);
        // odometer increment over the output index
        let mut d = rank;
        while d > 0 {
            d -= 1;
            idx[d] += 1;
            src += gather[d];
            if idx[d] < out_shape[d] {
                break;
            }
            src -= gather[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    Tensor::new(out_shape, out).expect("permutation preserves numel")
}

pub(crate) fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

struct Permute {
    inverse: Vec<usize>,
}

impl<S: Scalar> Op<S> for Permute {
    fn name(&self) -> &'static str {
        "permute"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        vec![Some(permute_data(grad, &self.inverse))]
    }
}

struct Concat {
    axis: usize,
    sizes: Vec<usize>,
}

impl<S: Scalar> Op<S> for Concat {
    fn name(&self) -> &'static str {
        "concat"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let mut start = 0;
        inputs
            .iter()
            .zip(&self.sizes)
            .zip(needs)
            .map(|((inp, &len), &need)| {
                let g = need.then(|| narrow_data(grad, self.axis, start, len, inp.shape()));
                start += len;
                g
            })
            .collect()
    }
}

fn narrow_data<S: Scalar>(
    t: &Tensor<S>,
    axis: usize,
    start: usize,
    len: usize,
    out_shape: &[usize],
) -> Tensor<S> {
    let (outer, size, inner) = split_axis(t.shape(), axis);
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let base = (o * size + start) * inner;
        out.extend_from_slice(&t.data()[base..base + len * inner]);
    }
    Tensor::new(out_shape.to_vec(), out).expect("narrow shape")
}

struct Narrow {
    axis: usize,
    start: usize,
}

impl<S: Scalar> Op<S> for Narrow {
    fn name(&self) -> &'static str {
        "narrow"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let mut out = Tensor::zeros(inputs[0].shape().to_vec());
        let (outer, size, inner) = split_axis(inputs[0].shape(), self.axis);
        let len = grad.shape()[self.axis];
        let data = out.data_mut();
        for o in 0..outer {
            let dst = (o * size + self.start) * inner;
            let src = o * len * inner;
            data[dst..dst + len * inner].copy_from_slice(&grad.data()[src..src + len * inner]);
        }
        vec![Some(out)]
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, S>> {
        let out = (*self.value()).clone().reshaped(shape.to_vec())?;
        self.tape().record(&[self], out, Reshape)
    }

    /// Reorders axes: output axis `i` is input axis `perm[i]`.
    pub fn permute(self, perm: &[usize]) -> Result<Var<'t, S>> {
        let v = self.value();
        let mut seen = vec![false; v.rank()];
        if perm.len() != v.rank() || perm.iter().any(|&p| p >= v.rank() || std::mem::replace(&mut seen[p], true)) {
            return Err(dim_err!("invalid permutation {:?} for rank {}", perm, v.rank()));
        }
        let out = permute_data(&v, perm);
        self.tape().record(&[self], out, Permute { inverse: inverse_perm(perm) })
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(vars: &[Var<'t, S>], axis: usize) -> Result<Var<'t, S>> {
        let first = vars.first().ok_or_else(|| Error::Usage("concat of nothing".into()))?;
        let values: Vec<_> = vars.iter().map(|v| v.value()).collect();
        let base = values[0].shape().to_vec();
        if axis >= base.len() {
            return Err(dim_err!("concat axis {} out of range for {:?}", axis, base));
        }
        for v in &values[1..] {
            let s = v.shape();
            if s.len() != base.len() || s.iter().zip(&base).enumerate().any(|(d, (a, b))| d != axis && a != b) {
                return Err(dim_err!("concat along {}: {:?} vs {:?}", axis, base, s));
            }
        }
        let sizes: Vec<usize> = values.iter().map(|v| v.shape()[axis]).collect();
        let mut out_shape = base.clone();
        out_shape[axis] = sizes.iter().sum();
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(out_shape.iter().product());
        for o in 0..outer {
            for (v, &len) in values.iter().zip(&sizes) {
                out.extend_from_slice(&v.data()[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let out = Tensor::new(out_shape, out)?;
        first.tape().record(vars, out, Concat { axis, sizes })
    }

    /// Slice `[start, start + len)` along `axis`.
    pub fn narrow(self, axis: usize, start: usize, len: usize) -> Result<Var<'t, S>> {
        let v = self.value();
        if axis >= v.rank() || start + len > v.shape()[axis] {
            return Err(dim_err!("narrow {}..{} on axis {} of {:?}", start, start + len, axis, v.shape()));
        }
        let mut out_shape = v.shape().to_vec();
        out_shape[axis] = len;
        let out = narrow_data(&v, axis, start, len, &out_shape);
        self.tape().record(&[self], out, Narrow { axis, start })
    }
}
