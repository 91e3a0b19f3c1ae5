//! Finite-difference checks of every primitive, plus algebraic properties of
//! the tape.

use dsanet_core::autodiff::{PoolMode, Tape, UpsampleMode, Var};
use dsanet_core::gradcheck::grad_check;
use dsanet_core::param::{Init, ParamStore};
use dsanet_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Values spaced apart so that no max-pool window is near a tie.
fn untied(shape: &[usize], seed: u64) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    Tensor::from_fn(shape.to_vec(), |i| order[i] as f64 * 0.01 - 0.3)
}

/// Weighted sum so the upstream gradient is not uniform.
fn weighted<'t>(v: Var<'t, f64>, seed: u64) -> dsanet_core::Result<Var<'t, f64>> {
    let w = v.tape().constant(random(&v.shape(), seed));
    v.mul(w)?.sum()
}

#[test]
fn conv2d_gradients() {
    let w = random(&[3, 2, 3, 3], 2);
    let b = random(&[3], 3);
    let x = random(&[1, 2, 5, 5], 1);
    let err = grad_check(
        |x| {
            let t = x.tape();
            weighted(x.conv2d(t.constant(w.clone()), t.constant(b.clone()), 1, 1)?, 9)
        },
        &x,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "input grad {err}");
    let err = grad_check(
        |w| {
            let t = w.tape();
            weighted(t.constant(x.clone()).conv2d(w, t.constant(b.clone()), 2, 1)?, 9)
        },
        &w,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "weight grad {err}");
    let err = grad_check(
        |b| {
            let t = b.tape();
            weighted(t.constant(x.clone()).conv2d(t.constant(w.clone()), b, 1, 0)?, 9)
        },
        &b,
        EPS,
    )
    .unwrap();
    assert!(err < TOL, "bias grad {err}");
}

#[test]
fn conv_transpose_gradients() {
    let w = random(&[3, 2, 2, 2], 5);
    let b = random(&[2], 6);
    let x = random(&[2, 3, 2, 3], 4);
    for which in 0..3 {
        let input = [&x, &w, &b][which].clone();
        let err = grad_check(
            |v| {
                let t = v.tape();
                let mut args = [t.constant(x.clone()), t.constant(w.clone()), t.constant(b.clone())];
                args[which] = v;
                weighted(args[0].conv_transpose2d(args[1], args[2])?, 7)
            },
            &input,
            EPS,
        )
        .unwrap();
        assert!(err < TOL, "argument {which}: {err}");
    }
}

#[test]
fn maxpool_gradient_away_from_ties() {
    let x = untied(&[1, 2, 4, 6], 3);
    let err = grad_check(|x| weighted(x.maxpool2d(2, 2)?, 1), &x, EPS).unwrap();
    assert!(err < TOL, "{err}");

    // gradient of sum(output) is exactly 1 at each window argmax, 0 elsewhere
    let tape = Tape::new();
    let v = tape.leaf(x.clone());
    let g = tape.backward_leaves(v.maxpool2d(2, 2).unwrap().sum().unwrap()).unwrap();
    let g = g.get(v).unwrap();
    for plane in 0..2 {
        for oy in 0..2 {
            for ox in 0..3 {
                let cells: Vec<(usize, usize)> =
                    (0..2).flat_map(|dy| (0..2).map(move |dx| (2 * oy + dy, 2 * ox + dx))).collect();
                let best = cells
                    .iter()
                    .copied()
                    .max_by(|a, b| x.at(&[0, plane, a.0, a.1]).partial_cmp(&x.at(&[0, plane, b.0, b.1])).unwrap())
                    .unwrap();
                for c in cells {
                    let expect = if c == best { 1.0 } else { 0.0 };
                    assert_eq!(g.at(&[0, plane, c.0, c.1]), expect);
                }
            }
        }
    }
}

#[test]
fn axis_pooling_gradients() {
    let x = untied(&[2, 8, 3], 8);
    for (mode, factor) in [(PoolMode::Max, 8), (PoolMode::Max, 2), (PoolMode::Mean, 4), (PoolMode::Mean, 8)] {
        let err = grad_check(|x| weighted(x.pool_over_axis(1, mode, factor)?, 2), &x, EPS).unwrap();
        assert!(err < TOL, "{mode:?}/{factor}: {err}");
    }
}

#[test]
fn group_norm_gradients_and_statistics() {
    let x = random(&[2, 8, 3, 3], 10);
    let gamma = random(&[8], 11);
    let beta = random(&[8], 12);
    for which in 0..3 {
        let input = [&x, &gamma, &beta][which].clone();
        let err = grad_check(
            |v| {
                let t = v.tape();
                let mut args = [t.constant(x.clone()), t.constant(gamma.clone()), t.constant(beta.clone())];
                args[which] = v;
                weighted(args[0].group_norm(4, args[1], args[2], 1e-5)?, 3)
            },
            &input,
            EPS,
        )
        .unwrap();
        assert!(err < TOL, "argument {which}: {err}");
    }

    let tape = Tape::new();
    let big = random(&[3, 8, 5, 5], 13);
    let y = tape
        .constant(big)
        .group_norm(4, tape.constant(Tensor::ones([8])), tape.constant(Tensor::zeros([8])), 1e-5)
        .unwrap()
        .value();
    for b in 0..3 {
        for g in 0..4 {
            let start = (b * 8 + g * 2) * 25;
            let vals = &y.data()[start..start + 50];
            let mean = vals.iter().sum::<f64>() / 50.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 50.0;
            assert!(mean.abs() < 1e-6, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-4, "var {var}");
        }
    }
}

#[test]
fn group_norm_single_group_is_whole_sample_normalization() {
    let tape = Tape::new();
    let x = random(&[2, 3, 2, 2], 21);
    let y = tape
        .constant(x.clone())
        .group_norm(1, tape.constant(Tensor::ones([3])), tape.constant(Tensor::zeros([3])), 1e-5)
        .unwrap()
        .value();
    for b in 0..2 {
        let vals = &x.data()[b * 12..(b + 1) * 12];
        let mean = vals.iter().sum::<f64>() / 12.0;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 12.0;
        for (i, v) in vals.iter().enumerate() {
            let expect = (v - mean) / (var + 1e-5).sqrt();
            assert!((y.data()[b * 12 + i] - expect).abs() < 1e-12);
        }
    }
}

#[test]
fn gelu_gradients() {
    let x = random(&[4, 4], 14).map(|v| v * 3.0);
    let err = grad_check(|x| x.gelu()?.sum(), &x, EPS).unwrap();
    assert!(err < 1e-7, "{err}");
}

#[test]
fn linear_gradients() {
    let x = random(&[3, 4], 15);
    let w = random(&[5, 4], 16);
    let b = random(&[5], 17);
    for which in 0..3 {
        let input = [&x, &w, &b][which].clone();
        let err = grad_check(
            |v| {
                let t = v.tape();
                let mut args = [t.constant(x.clone()), t.constant(w.clone()), t.constant(b.clone())];
                args[which] = v;
                weighted(args[0].linear(args[1], args[2])?, 4)
            },
            &input,
            EPS,
        )
        .unwrap();
        assert!(err < TOL, "argument {which}: {err}");
    }
}

#[test]
fn softmax_matmul_and_shape_gradients() {
    let x = random(&[2, 3, 4], 18);
    let other = random(&[2, 5, 4], 19);
    let checks: Vec<(&str, Box<dyn for<'t> Fn(Var<'t, f64>) -> dsanet_core::Result<Var<'t, f64>>>)> = vec![
        ("softmax", Box::new(|x| weighted(x.softmax(2)?, 5))),
        ("softmax_mid", Box::new(|x| weighted(x.softmax(1)?, 5))),
        ("matmul_t", Box::new(|x| {
            let o = x.tape().constant(other.clone());
            weighted(x.matmul_t(o)?, 6)
        })),
        ("matmul_rhs", Box::new(|x| {
            let o = x.tape().constant(other.clone());
            weighted(o.matmul(x.permute(&[0, 2, 1])?)?, 6)
        })),
        ("permute", Box::new(|x| weighted(x.permute(&[2, 0, 1])?, 7))),
        ("reshape", Box::new(|x| weighted(x.reshape(&[6, 4])?, 7))),
        ("narrow", Box::new(|x| weighted(x.narrow(2, 1, 2)?, 7))),
        ("concat", Box::new(|x| weighted(Var::concat(&[x, x.scale(2.0)?], 1)?, 7))),
        ("mul_broadcast", Box::new(|x| weighted(x.mul(x.narrow(1, 0, 1)?)?, 8))),
        ("add_broadcast", Box::new(|x| weighted(x.add(x.narrow(2, 3, 1)?)?, 8))),
        ("mean", Box::new(|x| x.gelu()?.mean())),
    ];
    for (name, f) in checks {
        let err = grad_check(|v| f(v), &x, EPS).unwrap();
        assert!(err < TOL, "{name}: {err}");
    }
}

#[test]
fn upsample_gradients() {
    let x = random(&[1, 2, 3, 4], 20);
    for mode in [UpsampleMode::Nearest, UpsampleMode::Bilinear] {
        let err = grad_check(|x| weighted(x.upsample2d(2, mode)?, 9), &x, EPS).unwrap();
        assert!(err < TOL, "{mode:?}: {err}");
    }
}

#[test]
fn loss_gradients() {
    let z = random(&[2, 3, 2, 2], 22).map(|v| v * 2.0);
    let labels: Vec<u8> = vec![0, 1, 2, 1, 2, 2, 0, 1];
    let err = grad_check(|z| z.cross_entropy_logits(&labels), &z, EPS).unwrap();
    assert!(err < TOL, "ce {err}");
    let err = grad_check(|z| z.softmax(1)?.soft_dice(&labels, &[1, 2], 1e-6), &z, EPS).unwrap();
    assert!(err < TOL, "dice {err}");
    let err = grad_check(|z| z.softmax(1)?.cross_entropy_probs(&labels), &z, EPS).unwrap();
    assert!(err < TOL, "ce on probabilities {err}");
}

#[test]
fn cross_entropy_gradient_is_p_minus_y() {
    let tape = Tape::new();
    let logits = Tensor::new([1, 3, 1, 1], vec![0.3, -1.2, 2.0]).unwrap();
    let z = tape.leaf(logits.clone());
    let loss = z.cross_entropy_logits(&[1]).unwrap();
    let g = tape.backward_leaves(loss).unwrap();
    let g = g.get(z).unwrap();
    let max = 2.0f64;
    let e: Vec<f64> = logits.data().iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    for k in 0..3 {
        let y = if k == 1 { 1.0 } else { 0.0 };
        assert!((g.data()[k] - (e[k] / s - y)).abs() < 1e-10);
    }
}

#[test]
fn backward_accumulates_and_validates() {
    let mut store = ParamStore::<f64>::new(1);
    let w = store.add("w", &[3], Init::Normal { std: 1.0 }).unwrap();
    let unused = store.add("unused", &[2], Init::Ones).unwrap();
    let tape = Tape::new();
    let v = tape.param(&store, w);
    let loss = v.mul(v).unwrap().sum().unwrap();
    tape.backward(loss, &mut store).unwrap();
    let once = store.grad(w).clone();
    let twice_expect = once.map(|g| 2.0 * g);
    tape.backward(loss, &mut store).unwrap();
    assert_eq!(*store.grad(w), twice_expect);
    assert!(store.grad(unused).data().iter().all(|&g| g == 0.0));
    let two_x = store.value(w).map(|x| 2.0 * x);
    assert!(once.max_abs_diff(&two_x) < 1e-15);

    // non-scalar loss is a usage error
    assert!(tape.backward(v, &mut store).is_err());
}

#[test]
fn tape_reverse_order_and_clear() {
    let mut tape = Tape::<f64>::new();
    {
        let x = tape.leaf(Tensor::full([2], 1.0));
        let y = x.gelu().unwrap().scale(3.0).unwrap().sum().unwrap();
        assert_eq!(tape.op_names(), vec![None, Some("gelu"), Some("scale"), Some("sum")]);
        tape.backward_leaves(y).unwrap();
    }
    tape.clear();
    assert!(tape.is_empty());
}

#[test]
fn non_finite_output_is_an_error() {
    let tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::full([2], f64::MAX));
    assert!(x.add(x).is_err());
}

fn softmax_sums(shape: Vec<usize>, axis: usize, values: Vec<f64>) -> f64 {
    let tape = Tape::new();
    let y = tape.constant(Tensor::new(shape.clone(), values).unwrap()).softmax(axis).unwrap().value();
    let (outer, n, inner) = (shape[..axis].iter().product::<usize>(), shape[axis], shape[axis + 1..].iter().product::<usize>());
    let mut worst = 0.0f64;
    for o in 0..outer {
        for i in 0..inner {
            let s: f64 = (0..n).map(|k| y.data()[(o * n + k) * inner + i]).sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    worst
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(values in proptest::collection::vec(-1e4f64..1e4, 24), axis in 0usize..3) {
        prop_assert!(softmax_sums(vec![2, 3, 4], axis, values) < 1e-6);
    }

    #[test]
    fn permute_then_inverse_is_identity(seed in 0u64..1000) {
        let x = random(&[2, 3, 1, 4], seed);
        let tape = Tape::new();
        let v = tape.constant(x.clone());
        let back = v.permute(&[3, 1, 0, 2]).unwrap().permute(&[2, 1, 3, 0]).unwrap();
        prop_assert_eq!(&*back.value(), &x);
    }

    #[test]
    fn primitives_are_deterministic(seed in 0u64..1000) {
        let x = random(&[1, 2, 6, 6], seed);
        let w = random(&[2, 2, 3, 3], seed + 1);
        let run = || {
            let tape = Tape::new();
            let y = tape.constant(x.clone())
                .conv2d(tape.constant(w.clone()), tape.constant(Tensor::zeros([2])), 1, 1).unwrap()
                .gelu().unwrap()
                .maxpool2d(2, 2).unwrap();
            (*y.value()).clone()
        };
        prop_assert_eq!(run(), run());
    }
}
