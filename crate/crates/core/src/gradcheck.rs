//! Central finite-difference checks of reverse-mode gradients.
//!
//! Error metric everywhere: `|analytic - numeric| / max(1, |analytic|)`.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Largest relative error between the reverse-mode gradient of a scalar
/// function and central differences with step `eps`, over every input element.
pub fn grad_check<F>(f: F, input: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: for<'t> Fn(Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let x = tape.leaf(input.clone());
    let y = f(x)?;
    let grads = tape.backward_leaves(y)?;
    let analytic = grads.get_or_zeros(x);

    let eval = |t: Tensor<f64>| -> Result<f64> {
        let tape = Tape::new();
        let x = tape.constant(t);
        Ok(f(x)?.value().item())
    };
    let mut worst = 0.0f64;
    for i in 0..input.numel() {
        let mut plus = input.clone();
        plus.data_mut()[i] += eps;
        let mut minus = input.clone();
        minus.data_mut()[i] -= eps;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * eps);
        worst = worst.max(rel_err(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Result of a parameter-gradient check for one parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
}

/// Compares accumulated parameter gradients with central differences.
///
/// `loss` builds the scalar loss from the bound parameters. At most
/// `per_param` randomly chosen entries of each parameter are perturbed
/// (all entries when the tensor is smaller).
pub fn param_grad_check<F>(
    store: &mut ParamStore<f64>,
    loss: F,
    eps: f64,
    per_param: usize,
    seed: u64,
) -> Result<Vec<ParamCheck>>
where
    F: for<'t> Fn(&'t Tape<f64>, &ParamStore<f64>) -> Result<Var<'t, f64>>,
{
    store.zero_grad();
    {
        let tape = Tape::new();
        let l = loss(&tape, store)?;
        tape.backward(l, store)?;
    }
    let eval = |store: &ParamStore<f64>| -> Result<f64> {
        let tape = Tape::new();
        Ok(loss(&tape, store)?.value().item())
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<ParamId> = store.iter().map(|(id, _)| id).collect();
    let mut report = Vec::with_capacity(ids.len());
    for id in ids {
        let n = store.value(id).numel();
        let picks: Vec<usize> = if n <= per_param { (0..n).collect() } else { sample(&mut rng, n, per_param).into_vec() };
        let mut worst = 0.0f64;
        for &i in &picks {
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + eps;
            let up = eval(store)?;
            store.value_mut(id).data_mut()[i] = orig - eps;
            let down = eval(store)?;
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(rel_err(store.grad(id).data()[i], numeric));
        }
        report.push(ParamCheck { name: store.get(id).name().to_string(), checked: picks.len(), max_rel_err: worst });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_is_exact() {
        let x = Tensor::from_fn([3, 4], |i| i as f64 * 0.3 - 1.0);
        let err = grad_check(|v| v.sum(), &x, 1e-5).unwrap();
        assert!(err < 1e-10, "{err}");
    }
}
