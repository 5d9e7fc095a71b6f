//! Network sizes, ablation modes and training stages.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resolution level of the full-image generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArchStage {
    Global,
    Local,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    /// Filters of the first global generator layer; doubled per downsample.
    pub base_width: usize,
    pub n_downsamples: usize,
    pub n_residual_blocks: usize,
    pub n_local_residual_blocks: usize,
    pub n_discriminator_scales: usize,
    pub disc_base_width: usize,
    pub disc_layers: usize,
    /// Output resolution as (width, height).
    pub image_size: (u32, u32),
    pub face_size: u32,
    pub face_base_width: usize,
    pub face_downsamples: usize,
    pub face_residual_blocks: usize,
    pub detector_base_width: usize,
    pub detector_layers: usize,
    /// Channel divisor of the perceptual feature extractor (1 = full width).
    pub vgg_width_divisor: usize,
    pub stage: ArchStage,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl ArchConfig {
    pub fn toy() -> Self {
        Self {
            base_width: 16,
            n_downsamples: 3,
            n_residual_blocks: 3,
            n_local_residual_blocks: 1,
            n_discriminator_scales: 2,
            disc_base_width: 16,
            disc_layers: 3,
            image_size: (128, 64),
            face_size: 32,
            face_base_width: 16,
            face_downsamples: 2,
            face_residual_blocks: 2,
            detector_base_width: 16,
            detector_layers: 3,
            vgg_width_divisor: 8,
            stage: ArchStage::Global,
        }
    }

    pub fn full() -> Self {
        Self {
            base_width: 64,
            n_downsamples: 4,
            n_residual_blocks: 9,
            n_local_residual_blocks: 3,
            n_discriminator_scales: 3,
            disc_base_width: 64,
            disc_layers: 3,
            image_size: (512, 256),
            face_size: 128,
            face_base_width: 64,
            face_downsamples: 4,
            face_residual_blocks: 9,
            detector_base_width: 64,
            detector_layers: 3,
            vgg_width_divisor: 1,
            stage: ArchStage::Global,
        }
    }

    /// Resolution at which the global generator runs.
    pub fn global_size(&self) -> (u32, u32) {
        match self.stage {
            ArchStage::Global => self.image_size,
            ArchStage::Local => (self.image_size.0 / 2, self.image_size.1 / 2),
        }
    }

    /// The configuration of the second stage: doubled output resolution and
    /// one extra discriminator scale at the new finest level.
    pub fn to_local(&self) -> Result<Self> {
        if self.stage == ArchStage::Local {
            return Err(Error::InvalidConfig("already at the local stage".into()));
        }
        let mut out = self.clone();
        out.stage = ArchStage::Local;
        out.image_size = (self.image_size.0 * 2, self.image_size.1 * 2);
        out.n_discriminator_scales += 1;
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_discriminator_scales == 0 {
            return bad("n_discriminator_scales must be >= 1".into());
        }
        if self.base_width == 0 || self.disc_base_width == 0 || self.face_base_width == 0 {
            return bad("network widths must be positive".into());
        }
        if self.stage == ArchStage::Local && self.base_width < 2 {
            return bad("local stage needs base_width >= 2".into());
        }
        if self.disc_layers == 0 || self.detector_layers == 0 {
            return bad("discriminator depth must be >= 1".into());
        }
        if self.vgg_width_divisor == 0 {
            return bad("vgg_width_divisor must be >= 1".into());
        }
        let (gw, gh) = self.global_size();
        let m = 1u32 << self.n_downsamples;
        if gw == 0 || gh == 0 || gw % m != 0 || gh % m != 0 {
            return bad(format!(
                "image size {:?} not divisible by 2^{} at the global level",
                self.image_size, self.n_downsamples
            ));
        }
        if self.stage == ArchStage::Local && (self.image_size.0 % 2 != 0 || self.image_size.1 % 2 != 0) {
            return bad("local stage needs even image dimensions".into());
        }
        let fm = 1u32 << self.face_downsamples;
        if self.face_size == 0 || self.face_size % fm != 0 {
            return bad(format!(
                "face_size {} not divisible by 2^{}",
                self.face_size, self.face_downsamples
            ));
        }
        if self.face_size > self.image_size.0 || self.face_size > self.image_size.1 {
            return bad("face_size exceeds the image".into());
        }
        Ok(())
    }
}

/// Ablation condition: frame-by-frame, with temporal smoothing, and with the face GAN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "fbf")]
    Fbf,
    #[serde(rename = "fbf-ts")]
    FbfTs,
    #[serde(rename = "fbf-ts-fg")]
    FbfTsFg,
}

impl Mode {
    pub fn temporal(self) -> bool {
        !matches!(self, Mode::Fbf)
    }

    pub fn face(self) -> bool {
        matches!(self, Mode::FbfTsFg)
    }

    /// Channels seen by the full-image discriminator: pose and image, once or per frame of the pair.
    pub fn disc_channels(self) -> usize {
        if self.temporal() {
            12
        } else {
            6
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Fbf => "fbf",
            Mode::FbfTs => "fbf-ts",
            Mode::FbfTsFg => "fbf-ts-fg",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '+'], "-").as_str() {
            "fbf" => Ok(Mode::Fbf),
            "fbf-ts" => Ok(Mode::FbfTs),
            "fbf-ts-fg" => Ok(Mode::FbfTsFg),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Global,
    Local,
    Face,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Global => "global",
            Stage::Local => "local",
            Stage::Face => "face",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(Stage::Global),
            "local" => Ok(Stage::Local),
            "face" => Ok(Stage::Face),
            other => Err(Error::InvalidConfig(format!("unknown stage {other:?}"))),
        }
    }
}
