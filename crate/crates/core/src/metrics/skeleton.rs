//! Zhang-Suen thinning and the centerline Dice built on it.

use crate::error::{Error, Result};

/// Row-major binary image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!("{} pixels for {height}x{width}", data.len())));
        }
        Ok(BinaryMask { height, width, data })
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    fn at(&self, y: isize, x: isize) -> bool {
        y >= 0
            && x >= 0
            && (y as usize) < self.height
            && (x as usize) < self.width
            && self.data[y as usize * self.width + x as usize]
    }
}

/// Neighbours P2..P9: N, NE, E, SE, S, SW, W, NW.
const RING: [(isize, isize); 8] = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)];

fn deletable(m: &BinaryMask, y: usize, x: usize, second: bool) -> bool {
    let p: Vec<bool> = RING.iter().map(|&(dy, dx)| m.at(y as isize + dy, x as isize + dx)).collect();
    let b = p.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
    if a != 1 {
        return false;
    }
    // p[0]=P2 (N), p[2]=P4 (E), p[4]=P6 (S), p[6]=P8 (W)
    if second {
        !(p[0] && p[2] && p[6]) && !(p[0] && p[4] && p[6])
    } else {
        !(p[0] && p[2] && p[4]) && !(p[2] && p[4] && p[6])
    }
}

/// First row-major pixel of every 8-connected component.
fn component_seeds(m: &BinaryMask) -> Vec<usize> {
    let mut seen = vec![false; m.data.len()];
    let mut seeds = Vec::new();
    let mut stack = Vec::new();
    for start in 0..m.data.len() {
        if !m.data[start] || seen[start] {
            continue;
        }
        seeds.push(start);
        seen[start] = true;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (y, x) = ((i / m.width) as isize, (i % m.width) as isize);
            for &(dy, dx) in &RING {
                let (ny, nx) = (y + dy, x + dx);
                if m.at(ny, nx) {
                    let j = ny as usize * m.width + nx as usize;
                    if !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
    }
    seeds
}

/// Two-subiteration Zhang-Suen thinning with out-of-image pixels treated as
/// background. Thinning erases some small blobs (a 2x2 square) entirely; any
/// 8-connected component left without a skeleton pixel keeps its first
/// row-major pixel.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let mut m = mask.clone();
    loop {
        let mut changed = false;
        for second in [false, true] {
            let kill: Vec<usize> = (0..m.data.len())
                .filter(|&i| m.data[i] && deletable(&m, i / m.width, i % m.width, second))
                .collect();
            changed |= !kill.is_empty();
            for i in kill {
                m.data[i] = false;
            }
        }
        if !changed {
            break;
        }
    }
    for seed in component_seeds(mask) {
        if !component_has_pixel(mask, &m, seed) {
            m.data[seed] = true;
        }
    }
    m
}

/// Whether the component of `mask` containing `seed` still has a pixel in `skel`.
fn component_has_pixel(mask: &BinaryMask, skel: &BinaryMask, seed: usize) -> bool {
    let mut seen = vec![false; mask.data.len()];
    let mut stack = vec![seed];
    seen[seed] = true;
    while let Some(i) = stack.pop() {
        if skel.data[i] {
            return true;
        }
        let (y, x) = ((i / mask.width) as isize, (i % mask.width) as isize);
        for &(dy, dx) in &RING {
            let (ny, nx) = (y + dy, x + dx);
            if mask.at(ny, nx) {
                let j = ny as usize * mask.width + nx as usize;
                if !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    false
}

/// `2 Tprec Tsens / (Tprec + Tsens)` with `Tprec = |S(pred) & gt| / |S(pred)|`
/// and `Tsens = |S(gt) & pred| / |S(gt)|`. Empty skeletons follow the
/// scalar-metric convention: 1 when both masks are empty, else 0.
pub fn cl_dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    if (pred.height, pred.width) != (gt.height, gt.width) {
        return Err(Error::Usage(format!(
            "prediction {}x{} vs ground truth {}x{}",
            pred.height, pred.width, gt.height, gt.width
        )));
    }
    let (sp, sg) = (skeletonize(pred), skeletonize(gt));
    let (np, ng) = (sp.count(), sg.count());
    if np == 0 && ng == 0 {
        return Ok(1.0);
    }
    if np == 0 || ng == 0 {
        return Ok(0.0);
    }
    let hit = |s: &BinaryMask, m: &BinaryMask| s.data.iter().zip(&m.data).filter(|(&a, &b)| a && b).count();
    let tprec = hit(&sp, gt) as f64 / np as f64;
    let tsens = hit(&sg, pred) as f64 / ng as f64;
    if tprec + tsens == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * tprec * tsens / (tprec + tsens))
}
