use serde::{Deserialize, Serialize};

use crate::block::{BackboneConfig, StageConfig};
use crate::error::{Error, Result};
use crate::hsw::{HswConfig, SimilarityKernel};

pub const MAX_STAGES: usize = 8;
pub const MAX_DEPTH: usize = 64;
pub const MAX_CHANNELS: usize = 1024;
pub const MAX_PITCH: usize = 16;
pub const MAX_SAMPLES_PER_SIDE: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub depth: usize,
    pub channels: usize,
}

/// Run configuration as read from JSON. Missing keys take the tiny preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub alpha: f64,
    pub background_phi: f64,
    pub patch_pitch: usize,
    pub samples_per_side: usize,
    pub stages: Vec<StageSpec>,
    pub similarity_kernel: SimilarityKernel,
}

impl Default for RunConfig {
    fn default() -> Self {
        let tiny = BackboneConfig::tiny();
        Self {
            seed: 0,
            alpha: tiny.alpha,
            background_phi: tiny.hsw.background_phi,
            patch_pitch: 1,
            samples_per_side: tiny.samples_per_side,
            stages: tiny
                .stages
                .iter()
                .map(|s| StageSpec {
                    depth: s.depth,
                    channels: s.channels,
                })
                .collect(),
            similarity_kernel: SimilarityKernel::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("config JSON: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn check(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.background_phi > 0.0 && self.background_phi < 1.0) {
            return Err(Error::Config(format!(
                "background_phi {} outside (0, 1)",
                self.background_phi
            )));
        }
        if !(1..=MAX_PITCH).contains(&self.patch_pitch) {
            return Err(Error::Config(format!("patch_pitch must be in 1..={MAX_PITCH}")));
        }
        if !(1..=MAX_SAMPLES_PER_SIDE).contains(&self.samples_per_side) {
            return Err(Error::Config(format!(
                "samples_per_side must be in 1..={MAX_SAMPLES_PER_SIDE}"
            )));
        }
        if !(1..=MAX_STAGES).contains(&self.stages.len()) {
            return Err(Error::Config(format!("need 1..={MAX_STAGES} stages")));
        }
        for (k, s) in self.stages.iter().enumerate() {
            if !(1..=MAX_DEPTH).contains(&s.depth) || !(1..=MAX_CHANNELS).contains(&s.channels) {
                return Err(Error::Config(format!(
                    "stage {}: depth must be in 1..={MAX_DEPTH} and channels in 1..={MAX_CHANNELS}",
                    k + 1
                )));
            }
        }
        Ok(())
    }

    pub fn backbone_config(&self) -> BackboneConfig {
        let tiny = BackboneConfig::tiny();
        BackboneConfig {
            stages: self
                .stages
                .iter()
                .map(|s| StageConfig {
                    depth: s.depth,
                    channels: s.channels,
                    patch_pitch: self.patch_pitch,
                })
                .collect(),
            state_size: tiny.state_size,
            samples_per_side: self.samples_per_side,
            alpha: self.alpha,
            hsw: HswConfig {
                background_phi: self.background_phi,
                kernel: self.similarity_kernel,
                ..HswConfig::default()
            },
        }
    }
}
