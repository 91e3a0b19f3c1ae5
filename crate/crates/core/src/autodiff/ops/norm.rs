use crate::autodiff::{Op, Var};
use crate::error::{dim_err, Result};
use crate::tensor::{Scalar, Tensor};

struct GroupNorm<S> {
    groups: usize,
    channels: usize,
    spatial: usize,
    mean: Vec<S>,
    rstd: Vec<S>,
}

impl<S: Scalar> Op<S> for GroupNorm<S> {
    fn name(&self) -> &'static str {
        "group_norm"
    }

    fn backward(
        &self,
        inputs: &[&Tensor<S>],
        _output: &Tensor<S>,
        grad: &Tensor<S>,
        needs: &[bool],
    ) -> Vec<Option<Tensor<S>>> {
        let (x, gamma) = (inputs[0], inputs[1]);
        let (c, sp) = (self.channels, self.spatial);
        let cpg = c / self.groups;
        let batch = x.shape()[0];
        let mut gx = needs[0].then(|| Tensor::zeros(x.shape().to_vec()));
        let mut ggamma = vec![S::zero(); c];
        let mut gbeta = vec![S::zero(); c];
        let n = S::c((cpg * sp) as f64);
        for b in 0..batch {
            for g in 0..self.groups {
                let stat = b * self.groups + g;
                let (mu, rstd) = (self.mean[stat], self.rstd[stat]);
                let start = (b * c + g * cpg) * sp;
                let end = start + cpg * sp;
                let (mut sum_dxhat, mut sum_dxhat_xhat) = (S::zero(), S::zero());
                for i in start..end {
                    let ch = (i / sp) % c;
                    let xhat = (x.data()[i] - mu) * rstd;
                    let dy = grad.data()[i];
                    ggamma[ch] = ggamma[ch] + dy * xhat;
                    gbeta[ch] = gbeta[ch] + dy;
                    let dxhat = dy * gamma.data()[ch];
                    sum_dxhat = sum_dxhat + dxhat;
                    sum_dxhat_xhat = sum_dxhat_xhat + dxhat * xhat;
                }
                if let Some(gx) = gx.as_mut() {
                    let d = gx.data_mut();
                    for i in start..end {
                        let ch = (i / sp) % c;
                        let xhat = (x.data()[i] - mu) * rstd;
                        let dxhat = grad.data()[i] * gamma.data()[ch];
                        d[i] = rstd / n * (n * dxhat - sum_dxhat - xhat * sum_dxhat_xhat);
                    }
                }
            }
        }
        vec![
            gx,
            needs[1].then(|| Tensor::new([c], ggamma).expect("gamma grad")),
            needs[2].then(|| Tensor::new([c], gbeta).expect("beta grad")),
        ]
    }
}

impl<'t, S: Scalar> Var<'t, S> {
    /// Group normalization over `[B, C, ...]`: statistics per (sample, group of
    /// `C / groups` channels) over the channels and all trailing axes, then a
    /// per-channel affine map. With trailing size 1 and `groups == 1` this is
    /// layer normalization over `C`.
    pub fn group_norm(self, groups: usize, gamma: Var<'t, S>, beta: Var<'t, S>, eps: f64) -> Result<Var<'t, S>> {
        let x = self.value();
        let gm = gamma.value();
        let bt = beta.value();
        if x.rank() < 2 {
            return Err(dim_err!("group_norm needs [B, C, ...], got {:?}", x.shape()));
        }
        let (batch, c) = (x.shape()[0], x.shape()[1]);
        if groups == 0 || c % groups != 0 {
            return Err(dim_err!("group_norm: {} channels not divisible into {} groups", c, groups));
        }
        if gm.shape() != [c] || bt.shape() != [c] {
            return Err(dim_err!("group_norm affine shapes {:?}/{:?} for {} channels", gm.shape(), bt.shape(), c));
        }
        let sp: usize = x.shape()[2..].iter().product();
        let cpg = c / groups;
        let n = S::c((cpg * sp) as f64);
        let eps = S::c(eps);
        let mut out = vec![S::zero(); x.numel()];
        let mut means = Vec::with_capacity(batch * groups);
        let mut rstds = Vec::with_capacity(batch * groups);
        for b in 0..batch {
            for g in 0..groups {
                let start = (b * c + g * cpg) * sp;
                let vals = &x.data()[start..start + cpg * sp];
                let mu = vals.iter().fold(S::zero(), |a, &v| a + v) / n;
                let var = vals.iter().fold(S::zero(), |a, &v| a + (v - mu) * (v - mu)) / n;
                let rstd = S::one() / (var + eps).sqrt();
                for (j, &v) in vals.iter().enumerate() {
                    let ch = g * cpg + j / sp;
                    out[start + j] = (v - mu) * rstd * gm.data()[ch] + bt.data()[ch];
                }
                means.push(mu);
                rstds.push(rstd);
            }
        }
        let out = Tensor::new(x.shape().to_vec(), out)?;
        let op = GroupNorm { groups, channels: c, spatial: sp, mean: means, rstd: rstds };
        self.tape().record(&[self, gamma, beta], out, op)
    }
}

#[cfg(test)]
mod tests {
    use crate::autodiff::Tape;
    use crate::tensor::Tensor;

    #[test]
    fn constant_input_normalizes_to_zero() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::full([2, 4, 3, 3], 5.0));
        let g = tape.constant(Tensor::ones([4]));
        let b = tape.constant(Tensor::zeros([4]));
        let y = x.group_norm(2, g, b, 1e-5).unwrap().value();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indivisible_groups_rejected() {
        let tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros([1, 6, 2, 2]));
        let g = tape.constant(Tensor::ones([6]));
        let b = tape.constant(Tensor::zeros([6]));
        assert!(x.group_norm(4, g, b, 1e-5).is_err());
    }
}
