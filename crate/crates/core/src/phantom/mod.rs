//! Synthetic angiography sequences: a branching vessel tree filled by an
//! advancing contrast front, a static dark skull band, and Gaussian noise.

mod dataset;
mod render;
mod tree;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{assign_folds, derive_seed, emit_dataset, read_folds, sample_id, FOLDS_FILE, FOLD_COUNT};
pub use render::{covering_speed, rasterize, render_frames, render_sequence, skull_mask, PhantomSample, Raster};
pub use tree::{gen_tree, CenterPoint, Segment, VesselTree, BV, MAT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomSpec {
    pub height: usize,
    pub width: usize,
    pub frames: usize,
    /// Trunk width range in pixels.
    pub trunk_width: (f64, f64),
    /// Child width as a fraction of the parent's; the upper bound is below 1.
    pub branch_width_ratio: (f64, f64),
    pub branch_depth: usize,
    pub branch_angle_deg: (f64, f64),
    /// Path length reached per frame; `None` reaches the whole tree in the last frame.
    pub contrast_speed: Option<f64>,
    pub background: f64,
    pub vessel_intensity: f64,
    pub skull: bool,
    pub skull_intensity: f64,
    pub skull_thickness: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            height: 64,
            width: 64,
            frames: 8,
            trunk_width: (3.0, 5.0),
            branch_width_ratio: (0.55, 0.8),
            branch_depth: 2,
            branch_angle_deg: (25.0, 70.0),
            contrast_speed: None,
            background: 180.0,
            vessel_intensity: 70.0,
            skull: true,
            skull_intensity: 70.0,
            skull_thickness: 2.5,
            noise_sigma: 8.0,
            seed: 0,
        }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Generation(m));
        let range_ok = |(lo, hi): (f64, f64)| lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi;
        if self.height < 16 || self.width < 16 {
            return fail(format!("canvas {}x{} is smaller than 16x16", self.height, self.width));
        }
        if self.frames == 0 {
            return fail("frames must be at least 1".into());
        }
        if !range_ok(self.trunk_width) || self.trunk_width.1 > self.height.min(self.width) as f64 / 4.0 {
            return fail(format!("trunk width {:?} does not fit the canvas", self.trunk_width));
        }
        if !range_ok(self.branch_width_ratio) || self.branch_width_ratio.1 >= 1.0 {
            return fail(format!("branch width ratio {:?} must lie in (0, 1)", self.branch_width_ratio));
        }
        if !range_ok(self.branch_angle_deg) || self.branch_angle_deg.1 >= 180.0 {
            return fail(format!("branch angle range {:?} is invalid", self.branch_angle_deg));
        }
        if self.contrast_speed.is_some_and(|s| !(s > 0.0)) {
            return fail("contrast speed must be positive".into());
        }
        let intensities = [self.background, self.vessel_intensity, self.skull_intensity];
        if intensities.iter().any(|v| !(0.0..=255.0).contains(v)) || self.vessel_intensity >= self.background {
            return fail("intensities must lie in [0, 255] with vessels darker than background".into());
        }
        if !(self.noise_sigma >= 0.0) || !(self.skull_thickness > 0.0) {
            return fail("noise sigma must be non-negative and skull thickness positive".into());
        }
        Ok(())
    }
}

/// Tree and rendering driven by one generator seeded from `spec.seed`.
pub fn generate(id: &str, spec: &PhantomSpec) -> Result<PhantomSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let tree = gen_tree(spec, &mut rng)?;
    Ok(render_sequence(id, tree, spec, &mut rng))
}
