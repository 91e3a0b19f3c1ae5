use dsanet_core::model::{DsaNet, ModelConfig};
use dsanet_core::param::Init;
use dsanet_core::phantom::{generate, PhantomSpec};
use dsanet_core::train::*;
use dsanet_core::{ParamStore, Tape};

#[test]
fn polynomial_schedule() {
    assert_eq!(poly_lr(0.01, 0, 40, 0.9), 0.01);
    assert!((poly_lr(0.01, 20, 40, 0.9) - 0.01 * 0.5f64.powf(0.9)).abs() < 1e-18);
    assert_eq!(poly_lr(0.01, 40, 40, 0.9), 0.0);
    let lrs: Vec<f64> = (0..40).map(|e| poly_lr(0.01, e, 40, 0.9)).collect();
    assert!(lrs.windows(2).all(|w| w[1] < w[0]));
}

fn one_param(value: [f64; 2]) -> ParamStore<f64> {
    let mut store = ParamStore::new(0);
    let id = store.add("w", &[2], Init::Zeros).unwrap();
    store.value_mut(id).data_mut().copy_from_slice(&value);
    store
}

fn set_grad(store: &mut ParamStore<f64>, g: [f64; 2]) {
    store.zero_grad();
    let tape = Tape::new();
    let id = store.id("w").unwrap();
    let w = tape.param(store, id);
    let c = tape.constant(dsanet_core::Tensor::new([2], g.to_vec()).unwrap());
    let loss = w.mul(c).unwrap().sum().unwrap();
    tape.backward(loss, store).unwrap();
}

#[test]
fn nesterov_momentum_matches_hand_computation() {
    let cfg = SgdConfig { momentum: 0.9, weight_decay: 0.1, nesterov: true, grad_clip: None };
    let mut store = one_param([1.0, -2.0]);
    let mut sgd = Sgd::new(cfg, &store);
    set_grad(&mut store, [0.5, 0.25]);
    sgd.step(&mut store, 0.1);
    // d = g + 0.1 w = [0.6, 0.05]; v = d; w -= 0.1 (d + 0.9 v)
    let w1 = [1.0 - 0.1 * (0.6 + 0.9 * 0.6), -2.0 - 0.1 * (0.05 + 0.9 * 0.05)];
    let got = store.value(store.id("w").unwrap()).data().to_vec();
    assert!((got[0] - w1[0]).abs() < 1e-15 && (got[1] - w1[1]).abs() < 1e-15, "{got:?}");
    set_grad(&mut store, [0.5, 0.25]);
    sgd.step(&mut store, 0.1);
    let d = [0.5 + 0.1 * w1[0], 0.25 + 0.1 * w1[1]];
    let v = [0.9 * 0.6 + d[0], 0.9 * 0.05 + d[1]];
    let w2 = [w1[0] - 0.1 * (d[0] + 0.9 * v[0]), w1[1] - 0.1 * (d[1] + 0.9 * v[1])];
    let got = store.value(store.id("w").unwrap()).data().to_vec();
    assert!((got[0] - w2[0]).abs() < 1e-15 && (got[1] - w2[1]).abs() < 1e-15, "{got:?}");
}

#[test]
fn gradient_clipping_scales_to_the_limit() {
    let cfg = SgdConfig { momentum: 0.0, weight_decay: 0.0, nesterov: false, grad_clip: Some(1.0) };
    let mut store = one_param([0.0, 0.0]);
    let mut sgd = Sgd::new(cfg, &store);
    set_grad(&mut store, [3.0, 4.0]);
    assert_eq!(sgd.step(&mut store, 1.0), 5.0);
    let got = store.value(store.id("w").unwrap()).data().to_vec();
    assert!((got[0] + 0.6).abs() < 1e-15 && (got[1] + 0.8).abs() < 1e-15, "{got:?}");
}

#[test]
fn argmax_prefers_lower_class_on_ties() {
    let probs = [0.5, 0.2, 0.3, 0.5, 0.4, 0.3, 0.0, 0.4, 0.4];
    let label = argmax_classes(&probs, 3, 1, 3).unwrap();
    assert_eq!(label.classes, vec![0, 1, 2]);
}

fn tiny() -> ModelConfig {
    ModelConfig { base_channels: 4, frames: 4, patch: 32, ..ModelConfig::desk() }
}

fn samples(n: u64) -> Vec<RawSample> {
    (0..n)
        .map(|i| {
            let spec = PhantomSpec { height: 32, width: 32, frames: 6, trunk_width: (2.0, 3.0), seed: i, ..Default::default() };
            let s = generate(&format!("s{i}"), &spec).unwrap();
            RawSample::new(s.sequence, Some(s.minip), Some(s.label), 4).unwrap()
        })
        .collect()
}

fn flip_planes(data: &[f32], planes: usize, h: usize, w: usize) -> Vec<f32> {
    let mut out = data.to_vec();
    for p in 0..planes {
        for y in 0..h {
            for x in 0..w {
                out[(p * h + y) * w + x] = data[(p * h + y) * w + (w - 1 - x)];
            }
        }
    }
    out
}

#[test]
fn mirror_tta_is_flip_equivariant() {
    let cfg = tiny();
    let mut store = ParamStore::<f64>::new(2);
    let net = DsaNet::new(&cfg, &mut store).unwrap();
    let input = samples(1)[0].normalized();
    let flipped = Input {
        frames: flip_planes(&input.frames, 4, 32, 32),
        minip: flip_planes(&input.minip, 1, 32, 32),
        ..input.clone()
    };
    let tta = InferConfig { patch: 32, stride: 16, tta: Tta::Mirror };
    let a = predict_probs(&net, &store, &input, &tta).unwrap();
    let b = predict_probs(&net, &store, &flipped, &tta).unwrap();
    let gap = flip_planes(&a, 3, 32, 32).iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
    assert!(gap < 1e-6, "{gap}");

    let plain = InferConfig { tta: Tta::None, ..tta };
    let c = predict_probs(&net, &store, &input, &plain).unwrap();
    let d = predict_probs(&net, &store, &flipped, &plain).unwrap();
    let gap = flip_planes(&c, 3, 32, 32).iter().zip(&d).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
    assert!(gap > 1e-4, "an untrained network is not flip-equivariant by itself ({gap})");
    for i in 0..32 * 32 {
        let s: f32 = (0..3).map(|k| a[k * 1024 + i]).sum();
        assert!((s - 1.0).abs() < 1e-5);
    }
}

#[test]
fn float64_training_is_bitwise_reproducible() {
    let data = samples(5);
    let (tr, va) = data.split_at(4);
    let run = || {
        let mut store = ParamStore::<f64>::new(9);
        let net = DsaNet::new(&tiny(), &mut store).unwrap();
        let cfg = TrainConfig { epochs: 2, iters_per_epoch: Some(2), ..Default::default() };
        let infer = InferConfig { patch: 32, stride: 16, tta: Tta::None };
        let out = train(&net, &mut store, tr, va, &cfg, &infer, 9, |_, _, _| Ok(())).unwrap();
        (out.logs, store.iter().map(|(_, p)| p.value().data().to_vec()).collect::<Vec<_>>())
    };
    let (a, b) = (run(), run());
    assert_eq!(a, b);
    assert!(a.0.iter().all(|l| l.train_loss.is_finite() && l.val_dice.is_some()));
}

#[test]
fn training_rejects_unlabelled_samples() {
    let mut data = samples(2);
    data[1].label = None;
    let mut store = ParamStore::<f32>::new(0);
    let net = DsaNet::new(&tiny(), &mut store).unwrap();
    let infer = InferConfig { patch: 32, stride: 16, tta: Tta::None };
    let err = train(&net, &mut store, &data, &[], &TrainConfig::default(), &infer, 0, |_, _, _| Ok(())).unwrap_err();
    assert!(err.to_string().contains("s1"), "{err}");
}
