//! TOML run configuration.
//!
//! ```toml
//! dy = 10
//!
//! [encoder]
//! sigma_h = 2.0
//!
//! [decoder]
//! theta_h = 0.5
//!
//! [scene]
//! n_lanes = 4
//! seed = 7
//!
//! [bench]
//! scenes = 50
//! ```
//!
//! Every key is optional. Unknown keys are rejected. The top-level `dy` is
//! copied into every section that needs the row interval.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FormatError;
use crate::bench::BenchConfig;
use crate::decoder::DecoderConfig;
use crate::encoder::EncoderConfig;
use crate::loss::LossConfig;
use crate::synth::{NoiseSpec, SceneSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Vertical keypoint interval, pixels.
    pub dy: u32,
    pub encoder: EncoderConfig,
    pub loss: LossConfig,
    pub decoder: DecoderConfig,
    pub scene: SceneSpec,
    pub noise: NoiseSpec,
    pub bench: BenchConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dy: 10,
            encoder: EncoderConfig::default(),
            loss: LossConfig::default(),
            decoder: DecoderConfig::default(),
            scene: SceneSpec::default(),
            noise: NoiseSpec::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, FormatError> {
        let mut cfg: Self = toml::from_str(text)?;
        cfg.set_dy(cfg.dy);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, FormatError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn set_dy(&mut self, dy: u32) {
        self.dy = dy;
        self.encoder.dy = dy;
        self.loss.dy = dy;
        self.decoder.dy = dy;
        self.scene.row_step = dy;
        self.noise.row_step = dy;
    }

    pub fn validate(&self) -> Result<(), FormatError> {
        let schema = |e: &dyn std::fmt::Display| FormatError::Schema(e.to_string());
        self.encoder.validate().map_err(|e| schema(&e))?;
        self.loss.validate().map_err(|e| schema(&e))?;
        self.decoder.validate().map_err(|e| schema(&e))?;
        self.scene.validate().map_err(|e| schema(&e))?;
        self.noise.validate().map_err(|e| schema(&e))?;
        self.bench.validate().map_err(|e| schema(&e))?;
        Ok(())
    }
}
