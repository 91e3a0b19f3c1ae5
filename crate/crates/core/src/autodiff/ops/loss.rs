use crate::autodiff::{Op, Var};
use crate::error::{dim_err, Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Lower clamp applied to probabilities before taking the log.
pub const LOG_CLAMP: f64 = 1e-12;

fn class_layout(shape: &[usize], labels: &[u8]) -> Result<(usize, usize, usize)> {
    if shape.len() < 2 {
        return Err(dim_err!("expected [B, M, ...], got {:?}", shape));
    }
    let (batch, classes) = (shape[0], shape[1]);
    let plane: usize = shape[2..].iter().product();
    if labels.len() != batch * plane {
        return Err(dim_err!("{} labels for prediction {:?}", labels.len(), shape));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
        return Err(Error::Data(format!("class index {} with only {} classes", bad, classes)));
    }
    Ok((batch, classes, plane))
}

struct CrossEntropy {
    labels: Vec<u8>,
    clamped: Vec<bool>,
}

impl<S: Scalar> Op<S> for CrossEntropy {
    fn name(&self) -> &'static str {
        "cross_entropy"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let z = inputs[0];
        let (batch, m) = (z.shape()[0], z.shape()[1]);
        let plane = z.numel() / (batch * m);
        let scale = grad.item() / S::c((batch * plane) as f64);
        let mut gz = Tensor::zeros(z.shape().to_vec());
        let d = gz.data_mut();
        for b in 0..batch {
            for p in 0..plane {
                let j = b * plane + p;
                if self.clamped[j] {
                    continue;
                }
                let at = |k: usize| (b * m + k) * plane + p;
                let max = (0..m).fold(S::neg_infinity(), |a, k| a.max(z.data()[at(k)]));
                let total = (0..m).fold(S::zero(), |a, k| a + (z.data()[at(k)] - max).exp());
                for k in 0..m {
                    let prob = (z.data()[at(k)] - max).exp() / total;
                    let y = if self.labels[j] as usize == k { S::one() } else { S::zero() };
                    d[at(k)] = (prob - y) * scale;
                }
            }
        }
        vec![Some(gz)]
    }
}

struct CrossEntropyProbs {
    labels: Vec<u8>,
}

impl<S: Scalar> Op<S> for CrossEntropyProbs {
    fn name(&self) -> &'static str {
        "cross_entropy_probs"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let p = inputs[0];
        let (batch, m) = (p.shape()[0], p.shape()[1]);
        let plane = p.numel() / (batch * m);
        let scale = grad.item() / S::c((batch * plane) as f64);
        let floor = S::c(LOG_CLAMP);
        let mut gp = Tensor::zeros(p.shape().to_vec());
        for b in 0..batch {
            for q in 0..plane {
                let at = (b * m + self.labels[b * plane + q] as usize) * plane + q;
                let v = p.data()[at];
                if v > floor {
                    gp.data_mut()[at] = -scale / v;
                }
            }
        }
        vec![Some(gp)]
    }
}

struct SoftDice<S> {
    labels: Vec<u8>,
    classes: Vec<usize>,
    eps: S,
}

impl<S: Scalar> SoftDice<S> {
    /// Per class: (intersection, prediction mass, target mass).
    fn sums(&self, p: &Tensor<S>) -> Vec<(S, S, S)> {
        let (batch, m) = (p.shape()[0], p.shape()[1]);
        let plane = p.numel() / (batch * m);
        self.classes
            .iter()
            .map(|&k| {
                let mut acc = (S::zero(), S::zero(), S::zero());
                for b in 0..batch {
                    for q in 0..plane {
                        let pv = p.data()[(b * m + k) * plane + q];
                        let y = self.labels[b * plane + q] as usize == k;
                        acc.1 = acc.1 + pv;
                        if y {
                            acc.0 = acc.0 + pv;
                            acc.2 = acc.2 + S::one();
                        }
                    }
                }
                acc
            })
            .collect()
    }
}

impl<S: Scalar> Op<S> for SoftDice<S> {
    fn name(&self) -> &'static str {
        "soft_dice"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        _needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let p = inputs[0];
        let (batch, m) = (p.shape()[0], p.shape()[1]);
        let plane = p.numel() / (batch * m);
        let sums = self.sums(p);
        let kcount = S::c(self.classes.len() as f64);
        let mut gp = Tensor::zeros(p.shape().to_vec());
        let d = gp.data_mut();
        for (&k, &(inter, pm, ym)) in self.classes.iter().zip(&sums) {
            let den = pm + ym + self.eps;
            let two = S::c(2.0);
            for b in 0..batch {
                for q in 0..plane {
                    let y = if self.labels[b * plane + q] as usize == k { S::one() } else { S::zero() };
                    let ddice = (two * y * den - two * inter) / (den * den);
                    d[(b * m + k) * plane + q] = -ddice / kcount * grad.item();
                }
            }
        }
        vec![Some(gp)]
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    /// Mean pixel cross-entropy of `[B, M, ...]` logits against class labels
    /// (`[B, ...]` flattened). Log-probabilities are clamped at `ln(1e-12)`.
    pub fn cross_entropy_logits(self, labels: &[u8]) -> Result<Var<'t, S>> {
        let z = self.value();
        let (batch, m, plane) = class_layout(z.shape(), labels)?;
        let floor = S::c(LOG_CLAMP.ln());
        let mut total = S::zero();
        let mut clamped = vec![false; batch * plane];
        for b in 0..batch {
            for p in 0..plane {
                let at = |k: usize| (b * m + k) * plane + p;
                let max = (0..m).fold(S::neg_infinity(), |a, k| a.max(z.data()[at(k)]));
                let lse = (0..m).fold(S::zero(), |a, k| a + (z.data()[at(k)] - max).exp()).ln() + max;
                let j = b * plane + p;
                let logp = z.data()[at(labels[j] as usize)] - lse;
                if logp < floor {
                    clamped[j] = true;
                }
                total = total - logp.max(floor);
            }
        }
        let out = Tensor::scalar(total / S::c((batch * plane) as f64));
        self.tape().record(&[self], out, CrossEntropy { labels: labels.to_vec(), clamped })
    }

    /// Mean pixel cross-entropy of `[B, M, ...]` probabilities, with
    /// probabilities clamped below at `1e-12` before the log.
    pub fn cross_entropy_probs(self, labels: &[u8]) -> Result<Var<'t, S>> {
        let p = self.value();
        let (batch, m, plane) = class_layout(p.shape(), labels)?;
        let floor = S::c(LOG_CLAMP);
        let mut total = S::zero();
        for b in 0..batch {
            for q in 0..plane {
                let v = p.data()[(b * m + labels[b * plane + q] as usize) * plane + q];
                total = total - v.max(floor).ln();
            }
        }
        let out = Tensor::scalar(total / S::c((batch * plane) as f64));
        self.tape().record(&[self], out, CrossEntropyProbs { labels: labels.to_vec() })
    }

    /// `1 - mean_k 2*sum(p_k y_k) / (sum p_k + sum y_k + eps)` over the given classes
    /// of `[B, M, ...]` probabilities.
    pub fn soft_dice(self, labels: &[u8], classes: &[usize], eps: f64) -> Result<Var<'t, S>> {
        let p = self.value();
        let (_, m, _) = class_layout(p.shape(), labels)?;
        if classes.is_empty() || classes.iter().any(|&k| k >= m) {
            return Err(Error::Usage(format!("dice classes {:?} for {} channels", classes, m)));
        }
        let op = SoftDice { labels: labels.to_vec(), classes: classes.to_vec(), eps: S::c(eps) };
        let sums = op.sums(&p);
        let mean_dice = sums
            .iter()
            .fold(S::zero(), |acc, &(i, pm, ym)| acc + S::c(2.0) * i / (pm + ym + op.eps))
            / S::c(classes.len() as f64);
        let out = Tensor::scalar(S::one() - mean_dice);
        self.tape().record(&[self], out, op)
    }
}
