//! Temporal resampling and minimum-intensity projection.

use super::sequence::{DsaSequence, Image, MinipImage};
use crate::error::{Error, Result};

/// Source frame indices for nearest-index uniform resampling:
/// `round(i * (t - 1) / (target - 1))`, halves rounding up. A single target
/// frame picks the middle frame.
pub fn resample_indices(t: usize, target: usize) -> Result<Vec<usize>> {
    if target < 1 {
        return Err(Error::Usage("target frame count must be at least 1".into()));
    }
    if t < 1 {
        return Err(Error::Usage("cannot resample an empty sequence".into()));
    }
    if target == 1 {
        return Ok(vec![(t - 1) / 2]);
    }
    let den = target - 1;
    Ok((0..target).map(|i| (2 * i * (t - 1) + den) / (2 * den)).collect())
}

pub fn resample_temporal(seq: &DsaSequence, target: usize) -> Result<DsaSequence> {
    let frames = resample_indices(seq.len(), target)?
        .into_iter()
        .map(|i| seq.frames[i].clone())
        .collect();
    Ok(DsaSequence { frames, ..seq.clone() })
}

pub fn minip(seq: &DsaSequence) -> MinipImage {
    let mut data = seq.frames[0].data.clone();
    for frame in &seq.frames[1..] {
        for (m, &v) in data.iter_mut().zip(&frame.data) {
            *m = m.min(v);
        }
    }
    MinipImage {
        source_id: seq.id.clone(),
        image: Image { height: seq.height(), width: seq.width(), data },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_rule() {
        assert_eq!(resample_indices(8, 8).unwrap(), (0..8).collect::<Vec<_>>());
        assert_eq!(resample_indices(15, 8).unwrap(), vec![0, 2, 4, 6, 8, 10, 12, 14]);
        assert_eq!(resample_indices(5, 8).unwrap(), vec![0, 1, 1, 2, 2, 3, 3, 4]);
        assert_eq!(resample_indices(7, 1).unwrap(), vec![3]);
        assert_eq!(resample_indices(1, 3).unwrap(), vec![0, 0, 0]);
        assert!(matches!(resample_indices(4, 0), Err(Error::Usage(_))));
    }

    #[test]
    fn projection_is_pixelwise_min() {
        let frames = [5.0, 2.0, 7.0].map(|v| Image::filled(1, 1, v)).to_vec();
        let seq = DsaSequence::new("s", frames, 255).unwrap();
        assert_eq!(minip(&seq).image.data, vec![2.0]);
    }
}
