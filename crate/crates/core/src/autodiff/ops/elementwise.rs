use crate::autodiff::{Op, Var};
use crate::error::{dim_err, Result};
use crate::tensor::{strides, Scalar, Tensor};

/// Output shape of a same-rank broadcast, or `None` when incompatible.
fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    if a.len() != b.len() {
        return None;
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Some(x),
            (1, y) => Some(y),
            (x, 1) => Some(x),
            _ => None,
        })
        .collect()
}

/// For every output element, the flat index of the broadcast source element.
fn source_indices(out_shape: &[usize], in_shape: &[usize]) -> Vec<usize> {
    let out_strides = strides(out_shape);
    let in_strides = strides(in_shape);
    let n: usize = out_shape.iter().product();
    (0..n)
        .map(|flat| {
            let mut src = 0;
            let mut rem = flat;
            for d in 0..out_shape.len() {
                let i = rem / out_strides[d];
                rem %= out_strides[d];
                if in_shape[d] != 1 {
                    src += i * in_strides[d];
                }
            }
            src
        })
        .collect()
}

fn reduce_to<S: Scalar>(grad: &Tensor<S>, map: Option<&[usize]>, shape: &[usize]) -> Tensor<S> {
    match map {
        None => grad.clone(),
        Some(map) => {
            let mut out = Tensor::zeros(shape.to_vec());
            let data = out.data_mut();
            for (&src, &g) in map.iter().zip(grad.data()) {
                data[src] = data[src] + g;
            }
            out
        }
    }
}

#[derive(Clone, Copy)]
enum BinaryKind {
    Add,
    Mul,
}

struct Binary {
    kind: BinaryKind,
    map_a: Option<Vec<usize>>,
    map_b: Option<Vec<usize>>,
}

impl<S: Scalar> Op<S> for Binary {
    fn name(&self) -> &'static str {
        match self.kind {
            BinaryKind::Add => "add",
            BinaryKind::Mul => "mul",
        }
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let (a, b) = (inputs[0], inputs[1]);
        match self.kind {
            BinaryKind::Add => vec![
                needs[0].then(|| reduce_to(grad, self.map_a.as_deref(), a.shape())),
                needs[1].then(|| reduce_to(grad, self.map_b.as_deref(), b.shape())),
            ],
            BinaryKind::Mul => {
                let fetch = |t: &Tensor<S>, map: &Option<Vec<usize>>, i: usize| match map {
                    Some(m) => t.data()[m[i]],
                    None => t.data()[i],
                };
                let ga = needs[0].then(|| {
                    let prod = Tensor::from_fn(grad.shape().to_vec(), |i| {
                        grad.data()[i] * fetch(b, &self.map_b, i)
                    });
                    reduce_to(&prod, self.map_a.as_deref(), a.shape())
                });
                let gb = needs[1].then(|| {
                    let prod = Tensor::from_fn(grad.shape().to_vec(), |i| {
                        grad.data()[i] * fetch(a, &self.map_a, i)
                    });
                    reduce_to(&prod, self.map_b.as_deref(), b.shape())
                });
                vec![ga, gb]
            }
        }
    }
}

struct Scale<S> {
    factor: S,
}

impl<S: Scalar> Op<S> for Scale<S> {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn backward(
        &self,
        _inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        vec![Some(grad.map(|g| g * self.factor))]
    }
}

struct Sum;

impl<S: Scalar> Op<S> for Sum {
    fn name(&self) -> &'static str {
        "sum"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        vec![Some(Tensor::full(inputs[0].shape().to_vec(), grad.item()))]
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    fn binary(self, other: Var<'t, S>, kind: BinaryKind) -> Result<Var<'t, S>> {
        let a = self.value();
        let b = other.value();
        let out_shape = broadcast_shape(a.shape(), b.shape()).ok_or_else(|| {
            dim_err!("cannot broadcast {:?} with {:?}", a.shape(), b.shape())
        })?;
        let map_a = (a.shape() != out_shape.as_slice()).then(|| source_indices(&out_shape, a.shape()));
        let map_b = (b.shape() != out_shape.as_slice()).then(|| source_indices(&out_shape, b.shape()));
        let f = |x: S, y: S| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Mul => x * y,
        };
        let out = Tensor::from_fn(out_shape, |i| {
            let x = a.data()[map_a.as_ref().map_or(i, |m| m[i])];
            let y = b.data()[map_b.as_ref().map_or(i, |m| m[i])];
            f(x, y)
        });
        self.tape().record(&[self, other], out, Binary { kind, map_a, map_b })
    }

    /// Elementwise sum with same-rank broadcasting over size-1 axes.
    pub fn add(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        self.binary(other, BinaryKind::Add)
    }

    /// Elementwise product with same-rank broadcasting over size-1 axes.
    pub fn mul(self, other: Var<'t, S>) -> Result<Var<'t, S>> {
        self.binary(other, BinaryKind::Mul)
    }

    pub fn scale(self, factor: S) -> Result<Var<'t, S>> {
        let out = self.value().map(|v| v * factor);
        self.tape().record(&[self], out, Scale { factor })
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(self) -> Result<Var<'t, S>> {
        let out = Tensor::scalar(self.value().sum());
        self.tape().record(&[self], out, Sum)
    }

    pub fn mean(self) -> Result<Var<'t, S>> {
        let n = self.value().numel();
        self.sum()?.scale(S::one() / S::c(n as f64))
    }
}
