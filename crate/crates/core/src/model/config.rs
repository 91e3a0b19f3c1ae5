use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which inputs feed the network. The single-input variants substitute the
/// missing branch's features with the present one's, keeping every shape.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    #[default]
    Full,
    /// Spatial branch on the MinIP only.
    MinipOnly,
    /// Temporal branch and TemporalFormer on the frames only.
    SequenceOnly,
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "full" => Ok(Variant::Full),
            "minip_only" | "minip" => Ok(Variant::MinipOnly),
            "sequence_only" | "sequence" => Ok(Variant::SequenceOnly),
            _ => Err(Error::Config(format!("unknown variant {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Channels after the first convolution; doubled at every level.
    pub base_channels: usize,
    pub levels: usize,
    pub frames: usize,
    pub num_classes: usize,
    pub tf_layers: usize,
    pub tf_heads: usize,
    pub mlp_ratio: f64,
    /// Spatial side length of training and inference patches.
    pub patch: usize,
    #[serde(default)]
    pub variant: Variant,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// Small widths and 64-pixel patches for CPU training.
    pub fn desk() -> Self {
        ModelConfig {
            base_channels: 8,
            levels: 5,
            frames: 8,
            num_classes: 3,
            tf_layers: 4,
            tf_heads: 4,
            mlp_ratio: 4.0,
            patch: 64,
            variant: Variant::Full,
        }
    }

    /// Widths and patch size of the clinical-scale network.
    pub fn full() -> Self {
        ModelConfig { base_channels: 32, patch: 512, ..Self::desk() }
    }

    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Channel count `c` at the bottleneck.
    pub fn bottleneck_channels(&self) -> usize {
        self.channels(self.levels - 1)
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.mlp_ratio * self.bottleneck_channels() as f64).round() as usize
    }

    /// Spatial sizes must be multiples of this.
    pub fn size_multiple(&self) -> usize {
        // one extra halving for the fusion module's pooling
        1 << self.levels
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.base_channels == 0 || self.frames == 0 || self.num_classes < 2 {
            return bad("base_channels and frames must be positive, num_classes at least 2".into());
        }
        if self.levels < 4 {
            return bad(format!("levels must be at least 4 for three output heads, got {}", self.levels));
        }
        let c = self.bottleneck_channels();
        if self.tf_heads == 0 || !c.is_multiple_of(self.tf_heads) {
            return bad(format!("tf_heads {} does not divide bottleneck channels {c}", self.tf_heads));
        }
        if !(self.mlp_ratio > 0.0) || self.mlp_hidden() == 0 {
            return bad(format!("mlp_ratio {} gives an empty hidden layer", self.mlp_ratio));
        }
        if self.patch == 0 || !self.patch.is_multiple_of(self.size_multiple()) {
            return bad(format!("patch {} is not a multiple of {}", self.patch, self.size_multiple()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: ModelConfig = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("config serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Group count for a normalization over `channels`: the largest divisor not above 8.
pub fn norm_groups(channels: usize) -> usize {
    (1..=8.min(channels)).rev().find(|g| channels.is_multiple_of(*g)).unwrap_or(1)
}
