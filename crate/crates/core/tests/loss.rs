//! Closed-form cases of the training objectives.

use dsanet_core::loss::*;
use dsanet_core::metrics::{confusion_counts, scalar_metrics};
use dsanet_core::pipeline::LabelMap;
use dsanet_core::{Error, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-9;

/// `[1, 3, h, w]` probabilities that are one-hot on `labels`, optionally
/// keeping `on` mass on the true class and spreading the rest.
fn probs_for(labels: &[u8], h: usize, w: usize, on: f64) -> Tensor<f64> {
    let n = h * w;
    Tensor::from_fn([1, 3, h, w], |i| {
        let (k, p) = (i / n, i % n);
        if labels[p] as usize == k {
            on
        } else {
            (1.0 - on) / 2.0
        }
    })
}

fn logits_for(labels: &[u8], batch: usize, h: usize, w: usize, margin: f64) -> Tensor<f64> {
    let n = h * w;
    Tensor::from_fn([batch, 3, h, w], |i| {
        let (b, k, p) = (i / (3 * n), (i / n) % 3, i % n);
        if labels[b * n + p] as usize == k {
            margin
        } else {
            0.0
        }
    })
}

fn one_scalar(f: impl for<'t> Fn(&'t Tape<f64>) -> dsanet_core::Result<dsanet_core::Var<'t, f64>>) -> f64 {
    let tape = Tape::new();
    f(&tape).unwrap().value().item()
}

#[test]
fn cross_entropy_closed_forms() {
    let labels: Vec<u8> = (0..16).map(|i| (i % 3) as u8).collect();
    let t = LabelBatch::new(1, 4, 4, labels.clone()).unwrap();
    let perfect = one_scalar(|tape| ce_loss_probs(tape.constant(probs_for(&labels, 4, 4, 1.0)), &t));
    assert_eq!(perfect, 0.0);
    let uniform = one_scalar(|tape| ce_loss_probs(tape.constant(Tensor::full([1, 3, 4, 4], 1.0 / 3.0)), &t));
    assert!((uniform - 3f64.ln()).abs() < TOL);
    let half = one_scalar(|tape| ce_loss_probs(tape.constant(probs_for(&labels, 4, 4, 0.5)), &t));
    assert!((half - 2f64.ln()).abs() < TOL);
    let from_logits = one_scalar(|tape| ce_loss(tape.constant(Tensor::zeros([1, 3, 4, 4])), &t));
    assert!((from_logits - 3f64.ln()).abs() < TOL);
    // a zero probability on the true class is clamped, not infinite
    let zero = one_scalar(|tape| ce_loss_probs(tape.constant(probs_for(&labels, 4, 4, 0.0)), &t));
    assert!((zero - -(LOG_CLAMP.ln())).abs() < TOL);

    let bad = LabelBatch::new(1, 4, 4, vec![3; 16]).unwrap();
    let tape = Tape::new();
    assert!(matches!(ce_loss(tape.constant(Tensor::<f64>::zeros([1, 3, 4, 4])), &bad), Err(Error::Data(_))));
}

#[test]
fn dice_closed_forms() {
    let (h, w) = (64, 64);
    let labels: Vec<u8> = (0..h * w).map(|i| [0u8, 1, 2, 1][i % 4]).collect();
    let t = LabelBatch::new(1, h, w, labels.clone()).unwrap();
    let perfect = one_scalar(|tape| dice_loss(tape.constant(probs_for(&labels, h, w, 1.0)), &t));
    assert!(perfect.abs() < TOL, "{perfect}");

    // prediction puts every pixel in the wrong class
    let wrong: Vec<u8> = labels.iter().map(|&c| (c + 1) % 3).collect();
    let disjoint = one_scalar(|tape| dice_loss(tape.constant(probs_for(&wrong, h, w, 1.0)), &t));
    assert!((disjoint - 1.0).abs() < TOL);

    let ones = LabelBatch::new(1, h, w, vec![1; h * w]).unwrap();
    let half = Tensor::from_fn([1, 3, h, w], |i| if i / (h * w) == 1 { 0.5 } else { 0.25 });
    let third = one_scalar(|tape| dice_loss(tape.constant(half.clone()), &ones));
    assert!((third - 1.0 / 3.0).abs() < TOL, "{third}");

    let background = LabelBatch::new(1, h, w, vec![0; h * w]).unwrap();
    assert_eq!(one_scalar(|tape| dice_loss(tape.constant(half.clone()), &background)), 0.0);
}

#[test]
fn soft_dice_matches_hard_dice_on_binary_probabilities() {
    let (h, w) = (64, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let gt: Vec<u8> = (0..h * w).map(|_| if rng.random_bool(0.3) { 1 } else { 0 }).collect();
    let pred: Vec<u8> = gt.iter().map(|&c| if rng.random_bool(0.1) { 1 - c } else { c }).collect();
    let t = LabelBatch::new(1, h, w, gt.clone()).unwrap();
    let soft = one_scalar(|tape| dice_loss(tape.constant(probs_for(&pred, h, w, 1.0)), &t));
    let counts = confusion_counts(&LabelMap::new(h, w, pred).unwrap(), &LabelMap::new(h, w, gt).unwrap()).unwrap();
    let hard = scalar_metrics(&counts.bv).dice;
    assert!((soft + hard - 1.0).abs() < TOL, "{soft} + {hard}");
}

#[test]
fn deep_supervision_weights() {
    let (h, w) = (128, 128);
    let labels = vec![1u8; h * w];
    let t = LabelBatch::new(1, h, w, labels.clone()).unwrap();
    let perfect = |s: usize| logits_for(&vec![1u8; (h / s) * (w / s)], 1, h / s, w / s, 60.0);
    let flat = |s: usize| Tensor::<f64>::zeros([1, 3, h / s, w / s]);

    let total = one_scalar(|tape| {
        let heads = [1, 2, 4].map(|s| tape.constant(perfect(s)));
        deep_supervision_loss(&heads, &t)
    });
    assert!(total.abs() < TOL, "{total}");

    let l = one_scalar(|tape| scale_loss(tape.constant(flat(1)), &t));
    let only_full = one_scalar(|tape| {
        let heads = [tape.constant(flat(1)), tape.constant(perfect(2)), tape.constant(perfect(4))];
        deep_supervision_loss(&heads, &t)
    });
    assert!((only_full - l).abs() < TOL, "{only_full} vs {l}");

    let all = one_scalar(|tape| {
        let heads = [1, 2, 4].map(|s| tape.constant(flat(s)));
        deep_supervision_loss(&heads, &t)
    });
    assert!((all - 1.75 * l).abs() < TOL, "{all} vs {}", 1.75 * l);
}

#[test]
fn cross_entropy_gradient_equals_softmax_minus_onehot() {
    let (b, h, w) = (2, 3, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let labels: Vec<u8> = (0..b * h * w).map(|_| rng.random_range(0..3)).collect();
    let z = Tensor::from_fn([b, 3, h, w], |_| rng.random_range(-4.0..4.0));
    let t = LabelBatch::new(b, h, w, labels.clone()).unwrap();
    let tape = Tape::new();
    let x = tape.leaf(z.clone());
    let g = tape.backward_leaves(ce_loss(x, &t).unwrap()).unwrap().get_or_zeros(x);
    let n = (b * h * w) as f64;
    let plane = h * w;
    for i in 0..z.numel() {
        let (bi, k, p) = (i / (3 * plane), (i / plane) % 3, i % plane);
        let col: Vec<f64> = (0..3).map(|c| z.data()[(bi * 3 + c) * plane + p]).collect();
        let denom: f64 = col.iter().map(|v| v.exp()).sum();
        let y = if labels[bi * plane + p] as usize == k { 1.0 } else { 0.0 };
        let expect = (col[k].exp() / denom - y) / n;
        assert!((g.data()[i] - expect).abs() < 1e-10);
    }
}

#[test]
fn label_downsampling_keeps_top_left() {
    let t = LabelBatch::new(1, 4, 4, (0..16).map(|i| (i % 3) as u8).collect()).unwrap();
    let d = t.downsample(2).unwrap();
    assert_eq!(d.classes, vec![0, 2, 2, 1]);
    assert!(t.downsample(3).is_err());
}
