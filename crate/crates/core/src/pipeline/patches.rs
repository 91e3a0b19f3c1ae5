//! Sliding-window patch extraction over a mirror-padded canvas and
//! uniform-weight stitching back to the original size.
//!
//! Inputs are planar `C*H*W` buffers; every channel (frame) is cut by the
//! same grid.

use crate::error::{Error, Result};

/// Reflects an index into `0..n` without repeating the edge sample
/// (`[1,2,3]` padded by one becomes `[2,1,2,3,2]`).
pub fn mirror_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let r = i.rem_euclid(period);
    (if r >= n as isize { period - r } else { r }) as usize
}

/// Placement of fixed-size windows over a padded canvas.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PatchGrid {
    pub patch: usize,
    pub stride: usize,
    pub height: usize,
    pub width: usize,
    pub padded_height: usize,
    pub padded_width: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    /// Top-left corner of each window on the padded canvas, row-major.
    pub offsets: Vec<(usize, usize)>,
}

/// Padded length and window starts along one axis.
fn axis_layout(n: usize, patch: usize, stride: usize) -> (usize, Vec<usize>) {
    if n <= patch {
        return (patch, vec![0]);
    }
    let k = (n - patch).div_ceil(stride) + 1;
    ((k - 1) * stride + patch, (0..k).map(|i| i * stride).collect())
}

impl PatchGrid {
    pub fn new(height: usize, width: usize, patch: usize, stride: usize) -> Result<Self> {
        if stride < 1 || patch < stride {
            return Err(Error::Usage(format!("need patch >= stride >= 1, got {patch}/{stride}")));
        }
        if height == 0 || width == 0 {
            return Err(Error::Dimension("empty image".into()));
        }
        let (padded_height, ys) = axis_layout(height, patch, stride);
        let (padded_width, xs) = axis_layout(width, patch, stride);
        let offsets = ys.iter().flat_map(|&y| xs.iter().map(move |&x| (y, x))).collect();
        Ok(PatchGrid {
            patch,
            stride,
            height,
            width,
            padded_height,
            padded_width,
            pad_top: (padded_height - height) / 2,
            pad_left: (padded_width - width) / 2,
            offsets,
        })
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Source pixel of a padded-canvas coordinate.
    fn source(&self, py: usize, px: usize) -> (usize, usize) {
        (
            mirror_index(py as isize - self.pad_top as isize, self.height),
            mirror_index(px as isize - self.pad_left as isize, self.width),
        )
    }
}

/// Cuts `channels` planes of `height*width` into patch buffers of
/// `channels*patch*patch`, one per grid offset.
pub fn extract_patches(
    data: &[f32],
    channels: usize,
    height: usize,
    width: usize,
    patch: usize,
    stride: usize,
) -> Result<(PatchGrid, Vec<Vec<f32>>)> {
    if data.len() != channels * height * width {
        return Err(Error::Dimension(format!(
            "{} values for {channels}x{height}x{width}",
            data.len()
        )));
    }
    let grid = PatchGrid::new(height, width, patch, stride)?;
    let plane = height * width;
    let patches = grid
        .offsets
        .iter()
        .map(|&(oy, ox)| {
            let mut out = Vec::with_capacity(channels * patch * patch);
            for c in 0..channels {
                let src = &data[c * plane..(c + 1) * plane];
                for y in 0..patch {
                    for x in 0..patch {
                        let (sy, sx) = grid.source(oy + y, ox + x);
                        out.push(src[sy * width + sx]);
                    }
                }
            }
            out
        })
        .collect();
    Ok((grid, patches))
}

/// Averages per-window outputs (`channels*patch*patch` each) with uniform
/// weights and crops the padding. Returns `channels*height*width`.
pub fn stitch(grid: &PatchGrid, outputs: &[Vec<f32>], channels: usize) -> Result<Vec<f32>> {
    if outputs.len() != grid.len() {
        return Err(Error::Usage(format!(
            "{} patch outputs for a grid of {}",
            outputs.len(),
            grid.len()
        )));
    }
    let p = grid.patch;
    if let Some(i) = outputs.iter().position(|o| o.len() != channels * p * p) {
        return Err(Error::Dimension(format!("patch output {i} is not {channels}x{p}x{p}")));
    }
    let (h, w) = (grid.height, grid.width);
    let mut sum = vec![0.0f64; channels * h * w];
    let mut count = vec![0u32; h * w];
    for (&(oy, ox), out) in grid.offsets.iter().zip(outputs) {
        for y in 0..p {
            let Some(iy) = (oy + y).checked_sub(grid.pad_top).filter(|&v| v < h) else { continue };
            for x in 0..p {
                let Some(ix) = (ox + x).checked_sub(grid.pad_left).filter(|&v| v < w) else {
                    continue;
                };
                count[iy * w + ix] += 1;
                for c in 0..channels {
                    sum[c * h * w + iy * w + ix] += out[c * p * p + y * p + x] as f64;
                }
            }
        }
    }
    Ok(sum
        .iter()
        .enumerate()
        .map(|(i, &s)| (s / count[i % (h * w)] as f64) as f32)
        .collect())
}
