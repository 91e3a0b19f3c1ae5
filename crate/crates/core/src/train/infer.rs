use serde::{Deserialize, Serialize};

use super::data::{batch_tensors, Input};
use crate::error::{Error, Result};
use crate::model::{Ctx, DsaNet};
use crate::param::ParamStore;
use crate::pipeline::{extract_patches, stitch, LabelMap};
use crate::autodiff::Tape;
use crate::tensor::Scalar;

/// Test-time augmentation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tta {
    #[default]
    None,
    /// Average of the identity, horizontal, vertical and double flips.
    Mirror,
}

impl std::str::FromStr for Tta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Tta::None),
            "mirror" => Ok(Tta::Mirror),
            _ => Err(Error::Usage(format!("unknown test-time augmentation {s:?} (none, mirror)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InferConfig {
    pub patch: usize,
    pub stride: usize,
    pub tta: Tta,
}

/// Flips the last two axes of `channels` planes of size `h x w`.
fn flip(data: &[f32], channels: usize, h: usize, w: usize, fy: bool, fx: bool) -> Vec<f32> {
    let mut out = vec![0.0; data.len()];
    for c in 0..channels {
        for y in 0..h {
            let sy = if fy { h - 1 - y } else { y };
            for x in 0..w {
                let sx = if fx { w - 1 - x } else { x };
                out[(c * h + y) * w + x] = data[(c * h + sy) * w + sx];
            }
        }
    }
    out
}

/// Softmax probabilities `[classes, H, W]` of one normalized input.
pub fn predict_probs<S: Scalar>(net: &DsaNet, store: &ParamStore<S>, input: &Input, cfg: &InferConfig) -> Result<Vec<f32>> {
    let (t, h, w) = (input.count, input.height, input.width);
    let classes = net.config.num_classes;
    let (grid, frame_patches) = extract_patches(&input.frames, t, h, w, cfg.patch, cfg.stride)?;
    let (_, minip_patches) = extract_patches(&input.minip, 1, h, w, cfg.patch, cfg.stride)?;
    let p = cfg.patch;
    let flips: &[(bool, bool)] = match cfg.tta {
        Tta::None => &[(false, false)],
        Tta::Mirror => &[(false, false), (false, true), (true, false), (true, true)],
    };
    let mut outputs = Vec::with_capacity(grid.len());
    for (fp, mp) in frame_patches.iter().zip(&minip_patches) {
        let inputs: Vec<Input> = flips
            .iter()
            .map(|&(fy, fx)| Input {
                frames: flip(fp, t, p, p, fy, fx),
                minip: flip(mp, 1, p, p, fy, fx),
                count: t,
                height: p,
                width: p,
            })
            .collect();
        let (seq, mip) = batch_tensors::<S>(&inputs)?;
        let tape = Tape::new();
        let ctx = Ctx::new(&tape, store);
        let probs = net.forward_tensors(&ctx, seq, mip)?.logits_full.softmax(1)?.value();
        let plane = classes * p * p;
        let mut avg = vec![0.0f64; plane];
        for (k, &(fy, fx)) in flips.iter().enumerate() {
            let v: Vec<f32> = probs.data()[k * plane..(k + 1) * plane].iter().map(|x| x.as_f64() as f32).collect();
            for (a, b) in avg.iter_mut().zip(flip(&v, classes, p, p, fy, fx)) {
                *a += b as f64;
            }
        }
        let n = flips.len() as f64;
        outputs.push(avg.into_iter().map(|a| (a / n) as f32).collect());
    }
    stitch(&grid, &outputs, classes)
}

/// Class of highest probability per pixel; ties go to the lower class.
pub fn argmax_classes(probs: &[f32], classes: usize, h: usize, w: usize) -> Result<LabelMap> {
    let n = h * w;
    let out = (0..n)
        .map(|i| {
            let mut best = 0;
            for c in 1..classes {
                if probs[c * n + i] > probs[best * n + i] {
                    best = c;
                }
            }
            best as u8
        })
        .collect();
    LabelMap::new(h, w, out)
}

pub fn predict<S: Scalar>(net: &DsaNet, store: &ParamStore<S>, input: &Input, cfg: &InferConfig) -> Result<(LabelMap, Vec<f32>)> {
    let probs = predict_probs(net, store, input, cfg)?;
    let label = argmax_classes(&probs, net.config.num_classes, input.height, input.width)?;
    Ok((label, probs))
}
