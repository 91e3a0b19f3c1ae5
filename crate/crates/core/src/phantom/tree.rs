use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::PhantomSpec;
use crate::error::Result;

/// Label class of the main trunk.
pub const MAT: u8 = 2;
/// Label class of branches.
pub const BV: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterPoint {
    pub y: f64,
    pub x: f64,
    /// Path length from the trunk root.
    pub geodesic: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub points: Vec<CenterPoint>,
    pub width: f64,
    pub class: u8,
    pub parent: Option<usize>,
    pub depth: usize,
}

/// Centerline graph: segment 0 is the trunk, the rest are branches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VesselTree {
    pub height: usize,
    pub width: usize,
    pub segments: Vec<Segment>,
}

impl VesselTree {
    pub fn max_geodesic(&self) -> f64 {
        self.segments
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.geodesic))
            .fold(0.0, f64::max)
    }
}

/// Thinnest branch that is still drawn.
const MIN_WIDTH: f64 = 1.5;

struct Walker<'a> {
    height: f64,
    width: f64,
    jitter: Normal<f64>,
    spec: &'a PhantomSpec,
}

impl Walker<'_> {
    fn inside(&self, y: f64, x: f64) -> bool {
        y >= 0.0 && x >= 0.0 && y <= self.height - 1.0 && x <= self.width - 1.0
    }

    /// Unit-step random walk with slowly drifting heading.
    fn walk(&self, rng: &mut impl Rng, start: CenterPoint, mut heading: f64, max_len: f64) -> Vec<CenterPoint> {
        let mut pts = vec![start];
        let mut p = start;
        while p.geodesic - start.geodesic < max_len {
            heading += self.jitter.sample(rng);
            let (y, x) = (p.y + heading.sin(), p.x + heading.cos());
            if !self.inside(y, x) {
                break;
            }
            p = CenterPoint { y, x, geodesic: p.geodesic + 1.0 };
            pts.push(p);
        }
        pts
    }

    fn branch(&self, rng: &mut impl Rng, segments: &mut Vec<Segment>, parent: usize, remaining: usize) {
        if remaining == 0 {
            return;
        }
        let (pw, plen, pdepth) = {
            let s = &segments[parent];
            (s.width, s.points.len(), s.depth)
        };
        let children = if parent == 0 { rng.random_range(2..=3) } else { rng.random_range(1..=2) };
        for _ in 0..children {
            let width = pw * rng.random_range(self.spec.branch_width_ratio.0..=self.spec.branch_width_ratio.1);
            if width < MIN_WIDTH || plen < 8 {
                continue;
            }
            let at = rng.random_range(plen * 15 / 100..=plen * 85 / 100);
            let base = heading_at(&segments[parent].points, at);
            let turn = rng.random_range(self.spec.branch_angle_deg.0..=self.spec.branch_angle_deg.1).to_radians();
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let start = segments[parent].points[at];
            let len = plen as f64 * rng.random_range(0.4..0.7);
            let points = self.walk(rng, start, base + sign * turn, len);
            if points.len() < 4 {
                continue;
            }
            segments.push(Segment { points, width, class: BV, parent: Some(parent), depth: pdepth + 1 });
            let id = segments.len() - 1;
            self.branch(rng, segments, id, remaining - 1);
        }
    }
}

fn heading_at(points: &[CenterPoint], i: usize) -> f64 {
    let a = points[i.saturating_sub(2)];
    let b = points[(i + 2).min(points.len() - 1)];
    (b.y - a.y).atan2(b.x - a.x)
}

/// Grows a trunk from a random canvas edge towards the interior, then
/// recursively attaches narrower branches up to `branch_depth` levels.
pub fn gen_tree(spec: &PhantomSpec, rng: &mut impl Rng) -> Result<VesselTree> {
    spec.validate()?;
    let (h, w) = (spec.height as f64, spec.width as f64);
    let walker = Walker { height: h, width: w, jitter: Normal::new(0.0, 0.06).expect("valid sigma"), spec };

    let side = rng.random_range(0..4);
    let along = |n: f64, rng: &mut dyn rand::RngCore| rng.random_range(0.25 * n..0.75 * n);
    let (y, x) = match side {
        0 => (0.0, along(w, rng)),
        1 => (along(h, rng), w - 1.0),
        2 => (h - 1.0, along(w, rng)),
        _ => (along(h, rng), 0.0),
    };
    let to_centre = ((h - 1.0) / 2.0 - y).atan2((w - 1.0) / 2.0 - x);
    let heading = to_centre + rng.random_range(-PI / 9.0..PI / 9.0);
    let trunk_width = rng.random_range(spec.trunk_width.0..=spec.trunk_width.1);
    let start = CenterPoint { y, x, geodesic: 0.0 };
    let length = rng.random_range(0.6..0.9) * h.max(w);
    let points = walker.walk(rng, start, heading, length);
    let mut segments = vec![Segment { points, width: trunk_width, class: MAT, parent: None, depth: 0 }];
    walker.branch(rng, &mut segments, 0, spec.branch_depth);
    Ok(VesselTree { height: spec.height, width: spec.width, segments })
}
