//! Random geometric and intensity augmentation of a training triple.
//!
//! One geometric transform (mirroring, rotation and scaling about the image
//! centre, then a crop) is applied to every frame, the MinIP and the label.
//! Intensities are resampled bilinearly, labels by nearest neighbour, and
//! samples falling outside the image are mirrored back in. Gamma acts on
//! intensities only, over the fixed range `[0, max_value]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::patches::mirror_index;
use super::sequence::{DsaSequence, Image, LabelMap, MinipImage};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub max_rotation_deg: f64,
    pub scale_range: (f64, f64),
    pub gamma_range: (f64, f64),
    pub mirror_prob: f64,
    /// Output side length; `None` keeps the input size.
    pub crop: Option<usize>,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_rotation_deg: 15.0,
            scale_range: (0.85, 1.15),
            gamma_range: (0.8, 1.2),
            mirror_prob: 0.5,
            crop: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentParams {
    pub rotation_deg: f64,
    pub scale: f64,
    pub gamma: f64,
    pub flip_x: bool,
    pub flip_y: bool,
    /// Output size and the position of its top-left corner on the input canvas.
    pub out_size: (usize, usize),
    pub origin: (isize, isize),
}

impl AugmentParams {
    pub fn identity(height: usize, width: usize) -> Self {
        AugmentParams {
            rotation_deg: 0.0,
            scale: 1.0,
            gamma: 1.0,
            flip_x: false,
            flip_y: false,
            out_size: (height, width),
            origin: (0, 0),
        }
    }

    pub fn sample(cfg: &AugmentConfig, height: usize, width: usize, rng: &mut impl Rng) -> Self {
        let uniform = |rng: &mut dyn rand::RngCore, (lo, hi): (f64, f64)| {
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        };
        let rotation_deg = uniform(rng, (-cfg.max_rotation_deg, cfg.max_rotation_deg));
        let scale = uniform(rng, cfg.scale_range);
        let gamma = uniform(rng, cfg.gamma_range);
        let flip_x = rng.random_bool(cfg.mirror_prob);
        let flip_y = rng.random_bool(cfg.mirror_prob);
        let (oh, ow) = cfg.crop.map_or((height, width), |c| (c, c));
        let mut offset = |n: usize, o: usize| -> isize {
            if n > o {
                rng.random_range(0..=n - o) as isize
            } else {
                -(((o - n) / 2) as isize)
            }
        };
        let origin = (offset(height, oh), offset(width, ow));
        AugmentParams { rotation_deg, scale, gamma, flip_x, flip_y, out_size: (oh, ow), origin }
    }
}

/// Maps output pixels to fractional source coordinates.
struct Warp {
    cy: f64,
    cx: f64,
    cos: f64,
    sin: f64,
    inv_scale: f64,
    p: AugmentParams,
}

impl Warp {
    fn new(p: &AugmentParams, height: usize, width: usize) -> Self {
        let theta = p.rotation_deg.to_radians();
        Warp {
            cy: (height as f64 - 1.0) / 2.0,
            cx: (width as f64 - 1.0) / 2.0,
            cos: theta.cos(),
            sin: theta.sin(),
            inv_scale: 1.0 / p.scale,
            p: p.clone(),
        }
    }

    fn source(&self, y: usize, x: usize) -> (f64, f64) {
        let mut dy = (y as isize + self.p.origin.0) as f64 - self.cy;
        let mut dx = (x as isize + self.p.origin.1) as f64 - self.cx;
        if self.p.flip_y {
            dy = -dy;
        }
        if self.p.flip_x {
            dx = -dx;
        }
        if self.p.rotation_deg == 0.0 && self.p.scale == 1.0 {
            return (self.cy + dy, self.cx + dx);
        }
        let sy = (-self.sin * dx + self.cos * dy) * self.inv_scale;
        let sx = (self.cos * dx + self.sin * dy) * self.inv_scale;
        (self.cy + sy, self.cx + sx)
    }
}

fn bilinear(img: &Image, sy: f64, sx: f64) -> f32 {
    let (y0, x0) = (sy.floor(), sx.floor());
    let (fy, fx) = ((sy - y0) as f32, (sx - x0) as f32);
    let (y0, x0) = (y0 as isize, x0 as isize);
    let at = |y: isize, x: isize| img.get(mirror_index(y, img.height), mirror_index(x, img.width));
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
    let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
    if fy == 0.0 {
        top
    } else {
        top * (1.0 - fy) + bottom * fy
    }
}

fn warp_image(img: &Image, warp: &Warp) -> Image {
    let (oh, ow) = warp.p.out_size;
    let mut data = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            let (sy, sx) = warp.source(y, x);
            data.push(bilinear(img, sy, sx));
        }
    }
    Image { height: oh, width: ow, data }
}

fn warp_label(label: &LabelMap, warp: &Warp) -> LabelMap {
    let (oh, ow) = warp.p.out_size;
    let mut classes = Vec::with_capacity(oh * ow);
    for y in 0..oh {
        for x in 0..ow {
            let (sy, sx) = warp.source(y, x);
            let yy = mirror_index(sy.round() as isize, label.height);
            let xx = mirror_index(sx.round() as isize, label.width);
            classes.push(label.get(yy, xx));
        }
    }
    LabelMap { height: oh, width: ow, classes }
}

fn apply_gamma(img: &mut Image, gamma: f64, max_value: f32) {
    if gamma == 1.0 {
        return;
    }
    for v in &mut img.data {
        let unit = (*v / max_value).clamp(0.0, 1.0) as f64;
        *v = (unit.powf(gamma) * max_value as f64) as f32;
    }
}

/// Applies explicit augmentation parameters.
pub fn apply_augment(
    seq: &DsaSequence,
    minip: &MinipImage,
    label: &LabelMap,
    params: &AugmentParams,
) -> (DsaSequence, MinipImage, LabelMap) {
    let warp = Warp::new(params, seq.height(), seq.width());
    let max = seq.max_value as f32;
    let frames = seq
        .frames
        .iter()
        .map(|f| {
            let mut out = warp_image(f, &warp);
            apply_gamma(&mut out, params.gamma, max);
            out
        })
        .collect();
    let mut mimg = warp_image(&minip.image, &warp);
    apply_gamma(&mut mimg, params.gamma, max);
    (
        DsaSequence { frames, ..seq.clone() },
        MinipImage { source_id: minip.source_id.clone(), image: mimg },
        warp_label(label, &warp),
    )
}

/// Draws parameters from `cfg` with a seeded generator and applies them.
pub fn augment(
    seq: &DsaSequence,
    minip: &MinipImage,
    label: &LabelMap,
    seed: u64,
    cfg: &AugmentConfig,
) -> (DsaSequence, MinipImage, LabelMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = AugmentParams::sample(cfg, seq.height(), seq.width(), &mut rng);
    apply_augment(seq, minip, label, &params)
}
