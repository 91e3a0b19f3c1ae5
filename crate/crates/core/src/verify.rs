//! Self-check suite run by `dsanet verify`: gradient checks, attention
//! normalization, pipeline round trips and metric oracles.

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{gelu_derivative, Op, PoolMode, Tape, UpsampleMode, Var};
use crate::error::{Error, Result};
use crate::gradcheck::{grad_check, param_grad_check};
use crate::loss::{total_loss, LabelBatch};
use crate::metrics::{auc, cl_dice, evaluate_image, paired_t_test, BinaryMask};
use crate::model::{Ctx, DsaNet, ModelConfig};
use crate::param::ParamStore;
use crate::pipeline::{extract_patches, minip, resample_indices, stitch, DsaSequence, Image, LabelMap};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Group {
    Gradients,
    Attention,
    Pipeline,
    Metrics,
}

impl Group {
    pub const ALL: [Group; 4] = [Group::Gradients, Group::Attention, Group::Pipeline, Group::Metrics];

    pub fn name(self) -> &'static str {
        match self {
            Group::Gradients => "gradients",
            Group::Attention => "attention",
            Group::Pipeline => "pipeline",
            Group::Metrics => "metrics",
        }
    }
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Group::ALL
            .into_iter()
            .find(|g| g.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown check group {s:?} (gradients, attention, pipeline, metrics)")))
    }
}

/// Deliberate defects used to confirm that the suite detects them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// GELU backward scaled by 1.01.
    Gelu,
}

impl FromStr for Fault {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gelu" => Ok(Fault::Gelu),
            _ => Err(Error::Usage(format!("unknown fault {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub group: Group,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

const EPS: f64 = 1e-5;
const PRIMITIVE_TOL: f64 = 1e-6;
const MODEL_TOL: f64 = 1e-3;

fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

fn weighted<'t>(v: Var<'t, f64>, seed: u64) -> Result<Var<'t, f64>> {
    let w = v.tape().constant(random(&v.shape(), seed));
    v.mul(w)?.sum()
}

struct FaultyGelu;

impl Op<f64> for FaultyGelu {
    fn name(&self) -> &'static str {
        "gelu"
    }

    fn backward(&self, inputs: &[&Tensor<f64>], _: &Tensor<f64>, grad: &Tensor<f64>, _: &[bool]) -> Vec<Option<Tensor<f64>>> {
        let x = inputs[0].data();
        vec![Some(Tensor::from_fn(grad.shape().to_vec(), |i| grad.data()[i] * gelu_derivative(x[i]) * 1.01))]
    }
}

fn gelu_of<'t>(x: Var<'t, f64>, fault: Option<Fault>) -> Result<Var<'t, f64>> {
    match fault {
        Some(Fault::Gelu) => {
            let out = x.gelu()?.value().as_ref().clone();
            x.tape().record(&[x], out, FaultyGelu)
        }
        None => x.gelu(),
    }
}

type Primitive = (&'static str, Vec<usize>, fn(Var<'_, f64>) -> Result<Var<'_, f64>>);

fn primitives() -> Vec<Primitive> {
    vec![
        ("add_broadcast", vec![2, 3, 4], |x| weighted(x.add(x.tape().constant(random(&[1, 3, 1], 40)))?, 41)),
        ("mul", vec![2, 3], |x| weighted(x.mul(x)?, 42)),
        ("scale_mean", vec![3, 4], |x| x.scale(1.5)?.mean()),
        ("softmax", vec![2, 3, 4], |x| weighted(x.softmax(1)?, 1)),
        ("conv2d", vec![1, 2, 5, 5], |x| {
            let t = x.tape();
            weighted(x.conv2d(t.constant(random(&[3, 2, 3, 3], 2)), t.constant(random(&[3], 3)), 1, 1)?, 4)
        }),
        ("conv_transpose2d", vec![1, 3, 2, 3], |x| {
            let t = x.tape();
            weighted(x.conv_transpose2d(t.constant(random(&[3, 2, 2, 2], 5)), t.constant(random(&[2], 6)))?, 7)
        }),
        ("matmul", vec![3, 4], |x| weighted(x.matmul(x.tape().constant(random(&[4, 2], 8)))?, 9)),
        ("matmul_t", vec![3, 4], |x| weighted(x.matmul_t(x.tape().constant(random(&[2, 4], 43)))?, 44)),
        ("linear", vec![3, 4], |x| {
            let t = x.tape();
            weighted(x.linear(t.constant(random(&[5, 4], 45)), t.constant(random(&[5], 46)))?, 47)
        }),
        ("group_norm", vec![2, 4, 3, 3], |x| {
            let t = x.tape();
            weighted(x.group_norm(2, t.constant(random(&[4], 10)), t.constant(random(&[4], 11)), 1e-5)?, 12)
        }),
        ("maxpool2d", vec![1, 2, 4, 4], |x| weighted(x.maxpool2d(2, 2)?, 13)),
        ("pool_over_axis_mean", vec![2, 3, 4], |x| weighted(x.pool_over_axis(1, PoolMode::Mean, 3)?, 14)),
        ("pool_over_axis_max", vec![2, 3, 4], |x| weighted(x.pool_over_axis(1, PoolMode::Max, 3)?, 48)),
        ("upsample_nearest", vec![1, 2, 3, 3], |x| weighted(x.upsample2d(2, UpsampleMode::Nearest)?, 49)),
        ("upsample_bilinear", vec![1, 2, 3, 3], |x| weighted(x.upsample2d(2, UpsampleMode::Bilinear)?, 15)),
        ("reshape", vec![2, 6], |x| weighted(x.reshape(&[3, 4])?, 50)),
        ("permute_narrow_concat", vec![2, 3, 4], |x| {
            let a = x.permute(&[2, 0, 1])?.narrow(0, 1, 2)?;
            weighted(Var::concat(&[a, a.scale(2.0)?], 1)?, 16)
        }),
        ("cross_entropy", vec![2, 3, 2, 2], |x| x.cross_entropy_logits(&[0, 1, 2, 1, 2, 0, 0, 1])),
        ("cross_entropy_probs", vec![2, 3, 2, 2], |x| x.softmax(1)?.cross_entropy_probs(&[0, 1, 2, 1, 2, 0, 0, 1])),
        ("soft_dice", vec![1, 3, 2, 2], |x| x.softmax(1)?.soft_dice(&[0, 1, 2, 1], &[1, 2], 1e-6)),
    ]
}

fn gradient_checks(fault: Option<Fault>) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let mut push = |name: &str, err: f64, tol: f64| {
        out.push(CheckOutcome {
            group: Group::Gradients,
            name: name.to_string(),
            passed: err < tol,
            detail: format!("max relative error {err:.3e} (limit {tol:.0e})"),
        })
    };
    let gelu_err = grad_check(|x| weighted(gelu_of(x, fault)?, 17), &random(&[3, 5], 18), EPS)?;
    push("gelu", gelu_err, PRIMITIVE_TOL);
    for (i, (name, shape, f)) in primitives().into_iter().enumerate() {
        push(name, grad_check(f, &random(&shape, 100 + i as u64), EPS)?, PRIMITIVE_TOL);
    }

    let cfg = tiny_config();
    let mut store = ParamStore::<f64>::new(3);
    let net = DsaNet::new(&cfg, &mut store)?;
    let (seq, mip) = (random(&[1, 4, 1, 16, 16], 20), random(&[1, 1, 16, 16], 21));
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let target = LabelBatch::new(1, 16, 16, (0..256).map(|_| rng.random_range(0..3u8)).collect())?;
    let report = param_grad_check(
        &mut store,
        |tape, store| {
            let ctx = Ctx::new(tape, store);
            total_loss(&net.forward_tensors(&ctx, seq.clone(), mip.clone())?, &target)
        },
        EPS,
        2,
        23,
    )?;
    let worst = report.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    push("model_parameters", worst, MODEL_TOL);
    Ok(out)
}

/// Smallest valid network: 16x16 input, four frames, base width 4.
pub fn tiny_config() -> ModelConfig {
    ModelConfig { base_channels: 4, levels: 4, frames: 4, tf_layers: 1, tf_heads: 2, patch: 16, ..ModelConfig::desk() }
}

fn attention_checks() -> Result<Vec<CheckOutcome>> {
    let cfg = ModelConfig { base_channels: 4, frames: 4, patch: 32, ..ModelConfig::desk() };
    let mut store = ParamStore::<f64>::new(5);
    let net = DsaNet::new(&cfg, &mut store)?;
    let tape = Tape::new();
    let ctx = Ctx::with_attention_capture(&tape, &store);
    net.forward_tensors(&ctx, random(&[2, 4, 1, 32, 32], 30), random(&[2, 1, 32, 32], 31))?;
    let records = ctx.take_attention();
    let mut out = Vec::new();
    for r in records {
        let shape = r.weights.shape();
        let last = *shape.last().expect("attention weights have rank >= 1");
        let mut worst = 0.0f64;
        let mut negative = false;
        for row in r.weights.data().chunks(last) {
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            negative |= row.iter().any(|&v| v < 0.0);
        }
        out.push(CheckOutcome {
            group: Group::Attention,
            name: r.site.clone(),
            passed: worst < 1e-6 && !negative,
            detail: format!("max |row sum - 1| = {worst:.3e}{}", if negative { ", negative weight" } else { "" }),
        });
    }
    if out.is_empty() {
        out.push(CheckOutcome {
            group: Group::Attention,
            name: "capture".into(),
            passed: false,
            detail: "no attention maps were recorded".into(),
        });
    }
    Ok(out)
}

fn pipeline_checks() -> Result<Vec<CheckOutcome>> {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut out = Vec::new();

    let mut stitch_ok = true;
    for (patch, stride) in [(8, 4), (8, 8), (16, 5), (7, 3), (32, 16)] {
        for _ in 0..5 {
            let (h, w) = (rng.random_range(5..40), rng.random_range(5..40));
            let data: Vec<f32> = (0..2 * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
            let (grid, patches) = extract_patches(&data, 2, h, w, patch, stride)?;
            stitch_ok &= stitch(&grid, &patches, 2)? == data;
        }
    }
    out.push(CheckOutcome {
        group: Group::Pipeline,
        name: "stitch_round_trip".into(),
        passed: stitch_ok,
        detail: "extract then stitch returns the input".into(),
    });

    let mut minip_ok = true;
    for _ in 0..10 {
        let t = rng.random_range(1..8);
        let frames: Vec<Image> = (0..t)
            .map(|_| Image { height: 4, width: 5, data: (0..20).map(|_| rng.random_range(0..255) as f32).collect() })
            .collect();
        let mut reversed = frames.clone();
        reversed.reverse();
        let a = minip(&DsaSequence::new("a", frames.clone(), 255)?);
        let b = minip(&DsaSequence::new("a", reversed, 255)?);
        let direct: Vec<f32> = (0..20).map(|i| frames.iter().map(|f| f.data[i]).fold(f32::INFINITY, f32::min)).collect();
        minip_ok &= a.image == b.image && a.image.data == direct;
    }
    out.push(CheckOutcome {
        group: Group::Pipeline,
        name: "minip".into(),
        passed: minip_ok,
        detail: "pixelwise minimum, independent of frame order".into(),
    });

    let mut resample_ok = true;
    for t in 5..=22 {
        let idx = resample_indices(t, 8)?;
        resample_ok &= idx.len() == 8 && idx[0] == 0 && idx[7] == t - 1 && idx.windows(2).all(|w| w[0] <= w[1]);
    }
    out.push(CheckOutcome {
        group: Group::Pipeline,
        name: "resample_indices".into(),
        passed: resample_ok,
        detail: "endpoints kept, indices non-decreasing for T in 5..=22".into(),
    });
    Ok(out)
}

fn metric_checks() -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    let mut push = |name: &str, passed: bool, detail: &str| {
        out.push(CheckOutcome { group: Group::Metrics, name: name.into(), passed, detail: detail.into() })
    };

    let gt = LabelMap::new(4, 4, vec![0, 1, 1, 0, 0, 1, 2, 2, 0, 0, 2, 0, 1, 0, 0, 0])?;
    let r = evaluate_image(&gt, None, &gt)?;
    let flat = r.flatten();
    push("perfect_prediction", flat.values().all(|&v| v == 1.0), "every metric is 1 when pred equals gt");

    let pred = LabelMap::new(4, 4, vec![0, 1, 0, 0, 0, 1, 2, 2, 1, 0, 2, 0, 1, 0, 0, 0])?;
    let r = evaluate_image(&pred, None, &gt)?;
    // vessel view: tp 6, fp 1, fn 1
    let ok = (r.all.view.dice - 12.0 / 14.0).abs() < 1e-15 && (r.all.view.jac - 6.0 / 8.0).abs() < 1e-15;
    push("hand_counted_case", ok, "dice 12/14 and jaccard 6/8 for one miss and one false alarm");

    let ok = auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]) == Some(1.0)
        && auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]) == Some(0.0)
        && auc(&[0.5; 4], &[false, true, false, true]) == Some(0.5);
    push("auc", ok, "separated, reversed and tied scores give 1, 0 and 0.5");

    let line = BinaryMask::new(5, 7, (0..35).map(|i| i / 7 == 2 && (1..6).contains(&(i % 7))).collect())?;
    let bar = BinaryMask::new(5, 7, (0..35).map(|i| (1..4).contains(&(i / 7)) && (1..6).contains(&(i % 7))).collect())?;
    let ok = cl_dice(&line, &line)? == 1.0 && cl_dice(&bar, &bar)? == 1.0;
    push("cldice", ok, "identical masks score 1");

    let a = [0.9, 0.8, 0.85, 0.7];
    let t = paired_t_test(&a, &a)?;
    push("paired_t_test", t.p == 1.0, "identical samples give p = 1");
    Ok(out)
}

/// Runs the selected groups in order; an error inside a check is reported
/// as a failure of that group.
pub fn run_suite(only: Option<Group>, fault: Option<Fault>) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for group in Group::ALL.into_iter().filter(|g| only.is_none_or(|o| o == *g)) {
        let result = match group {
            Group::Gradients => gradient_checks(fault),
            Group::Attention => attention_checks(),
            Group::Pipeline => pipeline_checks(),
            Group::Metrics => metric_checks(),
        };
        match result {
            Ok(r) => out.extend(r),
            Err(e) => out.push(CheckOutcome { group, name: "error".into(), passed: false, detail: e.to_string() }),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_names_round_trip() {
        for g in Group::ALL {
            assert_eq!(g.name().parse::<Group>().unwrap(), g);
        }
        assert!("everything".parse::<Group>().is_err());
    }
}
