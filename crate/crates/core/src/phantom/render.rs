use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::tree::{VesselTree, MAT};
use super::PhantomSpec;
use crate::pipeline::{minip, DsaSequence, Image, LabelMap, MinipImage};

/// Per-pixel rasterization of a tree: label and contrast arrival distance.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub label: LabelMap,
    /// Smallest root distance of a centerline point covering the pixel;
    /// infinite outside vessels.
    pub arrival: Vec<f64>,
}

/// Covers every pixel within half the segment width of a centerline point.
/// Trunk coverage takes precedence in the label.
pub fn rasterize(tree: &VesselTree) -> Raster {
    let (h, w) = (tree.height, tree.width);
    let mut classes = vec![0u8; h * w];
    let mut arrival = vec![f64::INFINITY; h * w];
    for seg in &tree.segments {
        let r = (seg.width / 2.0).max(0.5);
        for p in &seg.points {
            let (y0, y1) = ((p.y - r).floor().max(0.0) as usize, ((p.y + r).ceil() as usize).min(h - 1));
            let (x0, x1) = ((p.x - r).floor().max(0.0) as usize, ((p.x + r).ceil() as usize).min(w - 1));
            for y in y0..=y1 {
                for x in x0..=x1 {
                    let (dy, dx) = (y as f64 - p.y, x as f64 - p.x);
                    if dy * dy + dx * dx <= r * r {
                        let i = y * w + x;
                        arrival[i] = arrival[i].min(p.geodesic);
                        if seg.class == MAT || classes[i] == 0 {
                            classes[i] = seg.class;
                        }
                    }
                }
            }
        }
    }
    Raster { label: LabelMap { height: h, width: w, classes }, arrival }
}

/// Pixels of a static circular band crossing the canvas, centred outside it.
pub fn skull_mask(spec: &PhantomSpec, rng: &mut impl Rng) -> Vec<bool> {
    let (h, w) = (spec.height as f64, spec.width as f64);
    let span = h.max(w);
    let angle = rng.random_range(0.0..std::f64::consts::TAU);
    let dist = rng.random_range(0.9..1.4) * span;
    let (cy, cx) = ((h - 1.0) / 2.0 + dist * angle.sin(), (w - 1.0) / 2.0 + dist * angle.cos());
    // radius chosen so the band passes through the inner half of the canvas
    let radius = dist + rng.random_range(-0.25..0.25) * span;
    let half = spec.skull_thickness / 2.0;
    (0..spec.height * spec.width)
        .map(|i| {
            let (y, x) = ((i / spec.width) as f64, (i % spec.width) as f64);
            ((y - cy).hypot(x - cx) - radius).abs() <= half
        })
        .collect()
}

/// Contrast-front speed (pixels of path per frame) that reaches the whole
/// tree in the last frame.
pub fn covering_speed(tree: &VesselTree, frames: usize) -> f64 {
    if frames <= 1 {
        f64::INFINITY
    } else {
        tree.max_geodesic() / (frames - 1) as f64
    }
}

/// Frame `t` darkens the vessel pixels whose arrival distance is at most
/// `t * speed`; the skull band is dark in every frame. Noise is added last
/// and intensities are rounded into `[0, 255]`.
pub fn render_frames(spec: &PhantomSpec, raster: &Raster, skull: &[bool], speed: f64, rng: &mut impl Rng) -> Vec<Image> {
    let (h, w) = (spec.height, spec.width);
    let noise = (spec.noise_sigma > 0.0).then(|| Normal::new(0.0, spec.noise_sigma).expect("finite sigma"));
    (0..spec.frames)
        .map(|t| {
            let front = t as f64 * speed;
            let data = (0..h * w)
                .map(|i| {
                    let mut v = spec.background;
                    if raster.arrival[i] <= front {
                        v = v.min(spec.vessel_intensity);
                    }
                    if skull[i] {
                        v = v.min(spec.skull_intensity);
                    }
                    let v = v + noise.as_ref().map_or(0.0, |n| n.sample(rng));
                    v.round().clamp(0.0, 255.0) as f32
                })
                .collect();
            Image { height: h, width: w, data }
        })
        .collect()
}

/// One generated training example.
#[derive(Clone, Debug, PartialEq)]
pub struct PhantomSample {
    pub sequence: DsaSequence,
    pub minip: MinipImage,
    pub label: LabelMap,
    pub tree: VesselTree,
}

pub fn render_sequence(id: &str, tree: VesselTree, spec: &PhantomSpec, rng: &mut impl Rng) -> PhantomSample {
    let raster = rasterize(&tree);
    let skull = if spec.skull { skull_mask(spec, rng) } else { vec![false; spec.height * spec.width] };
    let speed = spec.contrast_speed.unwrap_or_else(|| covering_speed(&tree, spec.frames));
    let frames = render_frames(spec, &raster, &skull, speed, rng);
    let mut sequence = DsaSequence::new(id, frames, 255).expect("frames share one size");
    sequence.source_frame_count = spec.frames;
    let minip = minip(&sequence);
    PhantomSample { sequence, minip, label: raster.label, tree }
}
