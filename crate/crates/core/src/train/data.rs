use std::path::Path;

use crate::error::{Error, Result};
use crate::loss::LabelBatch;
use crate::pipeline::{
    augment, load_minip, load_sequence, minip, normalize_sample, resample_temporal, AugmentConfig, DsaSequence,
    LabelMap, MinipImage,
};
use crate::tensor::{Scalar, Tensor};

/// A sequence resampled to the model's frame count, with its MinIP and
/// optional label, still in raw intensities.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSample {
    pub sequence: DsaSequence,
    pub minip: MinipImage,
    pub label: Option<LabelMap>,
}

impl RawSample {
    /// The MinIP is taken over the original frames before resampling.
    pub fn new(sequence: DsaSequence, minip_image: Option<MinipImage>, label: Option<LabelMap>, frames: usize) -> Result<Self> {
        let minip = minip_image.unwrap_or_else(|| minip(&sequence));
        if (minip.image.height, minip.image.width) != (sequence.height(), sequence.width()) {
            return Err(Error::Data(format!(
                "{}: MinIP is {}x{} but frames are {}x{}",
                sequence.id,
                minip.image.height,
                minip.image.width,
                sequence.height(),
                sequence.width()
            )));
        }
        if let Some(l) = &label {
            if (l.height, l.width) != (sequence.height(), sequence.width()) {
                return Err(Error::Data(format!("{}: label size differs from frames", sequence.id)));
            }
        }
        let sequence = if sequence.len() == frames { sequence } else { resample_temporal(&sequence, frames)? };
        Ok(RawSample { sequence, minip, label })
    }

    /// Reads a sample directory, preferring a stored MinIP.
    pub fn load(dir: &Path, frames: usize) -> Result<Self> {
        let (seq, label) = load_sequence(dir)?;
        let m = load_minip(dir, &seq.id)?;
        Self::new(seq, m, label, frames)
    }

    pub fn id(&self) -> &str {
        &self.sequence.id
    }

    pub fn height(&self) -> usize {
        self.sequence.height()
    }

    pub fn width(&self) -> usize {
        self.sequence.width()
    }

    pub fn augmented(&self, seed: u64, cfg: &AugmentConfig) -> Result<RawSample> {
        let label = self
            .label
            .clone()
            .ok_or_else(|| Error::Data(format!("{}: augmentation needs a label", self.id())))?;
        let (sequence, minip, label) = augment(&self.sequence, &self.minip, &label, seed, cfg);
        Ok(RawSample { sequence, minip, label: Some(label) })
    }

    /// Network inputs: z-scored frames `[T, H, W]` and MinIP `[H, W]`.
    pub fn normalized(&self) -> Input {
        let (frames, minip) = normalize_sample(&self.sequence.stacked(), &self.minip.image.data);
        Input { frames, minip, count: self.sequence.len(), height: self.height(), width: self.width() }
    }
}

/// Normalized network input of one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Input {
    pub frames: Vec<f32>,
    pub minip: Vec<f32>,
    pub count: usize,
    pub height: usize,
    pub width: usize,
}

/// Stacks inputs of equal size into `[B, T, 1, H, W]` and `[B, 1, H, W]`.
pub fn batch_tensors<S: Scalar>(inputs: &[Input]) -> Result<(Tensor<S>, Tensor<S>)> {
    let first = inputs.first().ok_or_else(|| Error::Usage("empty batch".into()))?;
    let (t, h, w) = (first.count, first.height, first.width);
    if inputs.iter().any(|i| (i.count, i.height, i.width) != (t, h, w)) {
        return Err(Error::Dimension("batch members differ in size".into()));
    }
    let b = inputs.len();
    let cast = |v: &[f32]| v.iter().map(|&x| S::from_f64_lossy(x as f64)).collect::<Vec<S>>();
    let seq: Vec<S> = inputs.iter().flat_map(|i| cast(&i.frames)).collect();
    let mip: Vec<S> = inputs.iter().flat_map(|i| cast(&i.minip)).collect();
    Ok((Tensor::new([b, t, 1, h, w], seq)?, Tensor::new([b, 1, h, w], mip)?))
}

pub fn label_batch(labels: &[&LabelMap]) -> Result<LabelBatch> {
    let first = labels.first().ok_or_else(|| Error::Usage("empty batch".into()))?;
    let classes = labels.iter().flat_map(|l| l.classes.iter().copied()).collect();
    LabelBatch::new(labels.len(), first.height, first.width, classes)
}
