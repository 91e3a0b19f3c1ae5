use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::autodiff::{Op, Var};
use crate::error::{dim_err, Result};
use crate::tensor::{split_axis, Scalar, Tensor};

/// Exact (erf) GELU.
pub(crate) fn gelu_value<S: Scalar>(x: S) -> S {
    S::c(0.5) * x * (S::one() + (x * S::c(FRAC_1_SQRT_2)).erf())
}

/// d/dx of exact GELU: Phi(x) + x * phi(x).
pub(crate) fn gelu_derivative<S: Scalar>(x: S) -> S {
    let cdf = S::c(0.5) * (S::one() + (x * S::c(FRAC_1_SQRT_2)).erf());
    let pdf = (-(x * x) * S::c(0.5)).exp() * S::c(1.0 / (2.0 * PI).sqrt());
    cdf + x * pdf
}

struct Gelu;

impl<S: Scalar> Op<S> for Gelu {
    fn name(&self) -> &'static str {
        "gelu"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let x = inputs[0].data();
        vec![Some(Tensor::from_fn(grad.shape().to_vec(), |i| grad.data()[i] * gelu_derivative(x[i])))]
    }
}

pub(crate) fn softmax_data<S: Scalar>(t: &Tensor<S>, axis: usize) -> Tensor<S> {
    let (outer, n, inner) = split_axis(t.shape(), axis);
    let mut out = t.clone();
    let data = out.data_mut();
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * n + k) * inner + i;
            let max = (0..n).fold(S::neg_infinity(), |m, k| m.max(data[at(k)]));
            let mut total = S::zero();
            for k in 0..n {
                let e = (data[at(k)] - max).exp();
                data[at(k)] = e;
                total = total + e;
            }
            for k in 0..n {
                data[at(k)] = data[at(k)] / total;
            }
        }
    }
    out
}

struct Softmax {
    axis: usize,
}

impl<S: Scalar> Op<S> for Softmax {
    fn name(&self) -> &'static str {
        "softmax"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<S>],
        output: &Tensor<S>,
        grad: &Tensor<S>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let (outer, n, inner) = split_axis(output.shape(), self.axis);
        let y = output.data();
        let g = grad.data();
        let mut dx = Tensor::zeros(output.shape().to_vec());
        let d = dx.data_mut();
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * n + k) * inner + i;
                let dot = (0..n).fold(S::zero(), |acc, k| acc + g[at(k)] * y[at(k)]);
                for k in 0..n {
                    d[at(k)] = y[at(k)] * (g[at(k)] - dot);
                }
            }
        }
        vec![Some(dx)]
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    pub fn gelu(self) -> Result<Var<'t, S>> {
        let out = self.value().map(gelu_value);
        self.tape().record(&[self], out, Gelu)
    }

    /// Max-shifted softmax along `axis`.
    pub fn softmax(self, axis: usize) -> Result<Var<'t, S>> {
        let v = self.value();
        if axis >= v.rank() {
            return Err(dim_err!("softmax axis {} out of range for {:?}", axis, v.shape()));
        }
        let out = softmax_data(&v, axis);
        self.tape().record(&[self], out, Softmax { axis })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_reference_points() {
        assert_eq!(gelu_value(0.0f64), 0.0);
        assert!((gelu_value(10.0f64) - 10.0).abs() < 1e-4);
        assert!(gelu_value(-10.0f64).abs() < 1e-4);
    }

    #[test]
    fn softmax_closed_forms() {
        let t = Tensor::new([2], vec![0.0f64, 3f64.ln()]).unwrap();
        let s = softmax_data(&t, 0);
        assert!((s.data()[0] - 0.25).abs() < 1e-15 && (s.data()[1] - 0.75).abs() < 1e-15);
        let big = softmax_data(&Tensor::new([2], vec![1000.0f64, 1000.0]).unwrap(), 0);
        assert_eq!(big.data(), &[0.5, 0.5]);
        let flat = softmax_data(&Tensor::<f64>::full([7], 2.5), 0);
        assert!(flat.data().iter().all(|&v| (v - 1.0 / 7.0).abs() < 1e-15));
    }
}
