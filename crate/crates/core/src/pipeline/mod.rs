//! Sequence ingestion and preprocessing: temporal resampling, MinIP
//! projection, normalization, augmentation, and sliding-window patching.

mod augment;
mod normalize;
mod patches;
pub mod pgm;
mod sequence;
mod temporal;

pub use augment::{apply_augment, augment, AugmentConfig, AugmentParams};
pub use normalize::{apply_zscore, mean_std, normalize_intensity, normalize_sample};
pub use patches::{extract_patches, mirror_index, stitch, PatchGrid};
pub use sequence::{
    load_image, load_minip, load_sequence, read_label, read_manifest, save_image, save_label, save_sequence,
    DsaSequence, Image, LabelMap, Manifest, MinipImage, CLASS_NAMES, LABEL_FILE, MANIFEST,
    MINIP_FILE,
};
pub use temporal::{minip, resample_indices, resample_temporal};
