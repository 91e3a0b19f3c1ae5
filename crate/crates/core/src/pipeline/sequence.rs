//! Sequence, projection and label types and their on-disk directory layout.
//!
//! A sequence directory holds `manifest.json`, one PGM per frame, and
//! optionally `label.pgm` (values 0..=2) and a cached `minip.pgm`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pgm::{self, Greymap};
use crate::error::{Error, Result};

pub const MANIFEST: &str = "manifest.json";
pub const LABEL_FILE: &str = "label.pgm";
pub const MINIP_FILE: &str = "minip.pgm";

/// Row-major single-channel image.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width} image",
                data.len()
            )));
        }
        Ok(Image { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Image { height, width, data: vec![value; height * width] }
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

/// Frames of one acquisition. Vessels are dark (low intensity).
#[derive(Clone, Debug, PartialEq)]
pub struct DsaSequence {
    pub id: String,
    pub frames: Vec<Image>,
    /// Frame count before any temporal resampling.
    pub source_frame_count: usize,
    /// Largest representable intensity (PGM max value).
    pub max_value: u16,
}

impl DsaSequence {
    pub fn new(id: impl Into<String>, frames: Vec<Image>, max_value: u16) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::Data("a sequence needs at least one frame".into()));
        };
        let (h, w) = (first.height, first.width);
        if let Some(i) = frames.iter().position(|f| f.height != h || f.width != w) {
            return Err(Error::Dimension(format!(
                "frame {i} is {}x{}, frame 0 is {h}x{w}",
                frames[i].height, frames[i].width
            )));
        }
        let source_frame_count = frames.len();
        Ok(DsaSequence { id: id.into(), frames, source_frame_count, max_value })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    /// Frames concatenated as a `T*H*W` buffer.
    pub fn stacked(&self) -> Vec<f32> {
        self.frames.iter().flat_map(|f| f.data.iter().copied()).collect()
    }
}

/// Per-pixel minimum over the frames of a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct MinipImage {
    pub source_id: String,
    pub image: Image,
}

pub const CLASS_NAMES: [&str; 3] = ["background", "BV", "MAT"];

/// Per-pixel class map: 0 background, 1 BV, 2 MAT.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelMap {
    pub height: usize,
    pub width: usize,
    pub classes: Vec<u8>,
}

impl LabelMap {
    pub fn new(height: usize, width: usize, classes: Vec<u8>) -> Result<Self> {
        if classes.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} labels for a {height}x{width} map",
                classes.len()
            )));
        }
        if let Some(&c) = classes.iter().find(|&&c| c > 2) {
            return Err(Error::Data(format!("label value {c} outside {{0,1,2}}")));
        }
        Ok(LabelMap { height, width, classes })
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.classes[y * self.width + x]
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub id: String,
    pub frame_files: Vec<String>,
    pub height: usize,
    pub width: usize,
    pub source_frame_count: usize,
}

fn to_image(map: Greymap) -> Image {
    Image {
        height: map.height,
        width: map.width,
        data: map.samples.into_iter().map(f32::from).collect(),
    }
}

fn to_greymap(image: &Image, max_value: u16) -> Greymap {
    Greymap {
        width: image.width,
        height: image.height,
        max_value,
        samples: image
            .data
            .iter()
            .map(|&v| v.round().clamp(0.0, max_value as f32) as u16)
            .collect(),
    }
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(&path, e.to_string()))
}

/// Loads a sequence directory; the label is returned when `label.pgm` exists.
pub fn load_sequence(dir: &Path) -> Result<(DsaSequence, Option<LabelMap>)> {
    let manifest = read_manifest(dir)?;
    if manifest.frame_files.is_empty() {
        return Err(Error::format(dir.join(MANIFEST), "frame_files is empty"));
    }
    let mut frames = Vec::with_capacity(manifest.frame_files.len());
    let mut max_value = 0u16;
    for name in &manifest.frame_files {
        let path = dir.join(name);
        let map = pgm::read(&path)?;
        if map.height != manifest.height || map.width != manifest.width {
            return Err(Error::format(
                &path,
                format!(
                    "frame is {}x{}, manifest declares {}x{}",
                    map.height, map.width, manifest.height, manifest.width
                ),
            ));
        }
        max_value = max_value.max(map.max_value);
        frames.push(to_image(map));
    }
    let mut seq = DsaSequence::new(manifest.id, frames, max_value)?;
    seq.source_frame_count = manifest.source_frame_count;

    let label_path = dir.join(LABEL_FILE);
    let label = if label_path.exists() {
        Some(load_label(&label_path, manifest.height, manifest.width)?)
    } else {
        None
    };
    Ok((seq, label))
}

fn load_label(path: &Path, height: usize, width: usize) -> Result<LabelMap> {
    let label = read_label(path)?;
    if label.height != height || label.width != width {
        return Err(Error::format(
            path,
            format!("label is {}x{}, frames are {height}x{width}", label.height, label.width),
        ));
    }
    Ok(label)
}

/// Reads a standalone label map, such as a saved prediction.
pub fn read_label(path: &Path) -> Result<LabelMap> {
    let map = pgm::read(path)?;
    if let Some(&c) = map.samples.iter().find(|&&c| c > 2) {
        return Err(Error::format(path, format!("label value {c} outside {{0,1,2}}")));
    }
    Ok(LabelMap { height: map.height, width: map.width, classes: map.samples.iter().map(|&c| c as u8).collect() })
}

/// Reads a cached `minip.pgm` if present.
pub fn load_minip(dir: &Path, source_id: &str) -> Result<Option<MinipImage>> {
    let path = dir.join(MINIP_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let image = to_image(pgm::read(&path)?);
    Ok(Some(MinipImage { source_id: source_id.to_string(), image }))
}

fn frame_name(i: usize) -> String {
    format!("frame_{i:03}.pgm")
}

/// Writes a sequence directory. Intensities are rounded and clamped to
/// `[0, max_value]`.
pub fn save_sequence(
    dir: &Path,
    seq: &DsaSequence,
    label: Option<&LabelMap>,
    minip: Option<&MinipImage>,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let frame_files: Vec<String> = (0..seq.len()).map(frame_name).collect();
    for (frame, name) in seq.frames.iter().zip(&frame_files) {
        pgm::write(&dir.join(name), &to_greymap(frame, seq.max_value))?;
    }
    if let Some(label) = label {
        if label.height != seq.height() || label.width != seq.width() {
            return Err(Error::Dimension("label size differs from frame size".into()));
        }
        save_label(&dir.join(LABEL_FILE), label)?;
    }
    if let Some(minip) = minip {
        pgm::write(&dir.join(MINIP_FILE), &to_greymap(&minip.image, seq.max_value))?;
    }
    let manifest = Manifest {
        id: seq.id.clone(),
        frame_files,
        height: seq.height(),
        width: seq.width(),
        source_frame_count: seq.source_frame_count,
    };
    let path: PathBuf = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Writes a label map alone as an 8-bit PGM.
pub fn save_label(path: &Path, label: &LabelMap) -> Result<()> {
    let map = Greymap {
        width: label.width,
        height: label.height,
        max_value: 255,
        samples: label.classes.iter().map(|&c| c as u16).collect(),
    };
    pgm::write(path, &map)
}

/// Writes an image as a PGM after rounding and clamping to `[0, max_value]`.
pub fn save_image(path: &Path, image: &Image, max_value: u16) -> Result<()> {
    pgm::write(path, &to_greymap(image, max_value))
}

pub fn load_image(path: &Path) -> Result<(Image, u16)> {
    let map = pgm::read(path)?;
    let max = map.max_value;
    Ok((to_image(map), max))
}
