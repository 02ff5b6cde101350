//! JSON experiment configuration. Angles are degrees here and radians
//! everywhere past [`ConfigFile::to_experiment`].

use std::path::Path;

use loophole_core::hv::{DetectorMode, DetectorModel, SourceModel, Vec3};
use loophole_core::sim::ExperimentConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::sha256_json;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    pub n_pairs: u64,
    pub seed: u64,
    #[serde(default)]
    pub source: SourceConfig,
    pub detector_a: DetectorConfig,
    pub detector_b: DetectorConfig,
    #[serde(default = "default_identical_spins")]
    pub identical_spins: bool,
    #[serde(default)]
    pub dark_rate: f64,
}

fn default_identical_spins() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase", deny_unknown_fields)]
pub enum SourceConfig {
    #[default]
    UniformSphere,
    /// Density proportional to `1 + strength (lambda . axis)^2`.
    Anisotropic { axis: [f64; 3], strength: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default = "default_mode")]
    pub mode: DetectorMode,
    pub n_half_angle_deg: f64,
    /// Defaults to the N half-angle.
    #[serde(default)]
    pub s_half_angle_deg: Option<f64>,
    #[serde(default)]
    pub n_offset_deg: f64,
    #[serde(default)]
    pub s_offset_deg: f64,
}

fn default_mode() -> DetectorMode {
    DetectorMode::TwoChannel
}

impl DetectorConfig {
    fn to_model(&self) -> CliResult<DetectorModel> {
        let n_half = self.n_half_angle_deg.to_radians();
        let s_half = self.s_half_angle_deg.unwrap_or(self.n_half_angle_deg).to_radians();
        Ok(DetectorModel::with_caps(
            self.mode,
            n_half,
            s_half,
            self.n_offset_deg.to_radians(),
            self.s_offset_deg.to_radians(),
        )?)
    }
}

impl ConfigFile {
    pub fn parse(text: &str) -> CliResult<Self> {
        let config: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schemaVersion {} (expected {SCHEMA_VERSION})",
                config.schema_version
            )));
        }
        config.to_experiment()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_experiment(&self) -> CliResult<ExperimentConfig> {
        let source = match self.source {
            SourceConfig::UniformSphere => SourceModel::UniformSphere,
            SourceConfig::Anisotropic { axis, strength } => {
                SourceModel::anisotropic(Vec3::new(axis[0], axis[1], axis[2]), strength)?
            }
        };
        let config = ExperimentConfig {
            n_pairs: self.n_pairs,
            seed: self.seed,
            source,
            detector_a: self.detector_a.to_model()?,
            detector_b: self.detector_b.to_model()?,
            identical_spins: self.identical_spins,
            dark_rate: self.dark_rate,
        };
        config.validate()?;
        Ok(config)
    }

    /// Digest of the canonical re-serialisation, so formatting and key order
    /// in the file do not matter.
    pub fn digest(&self) -> String {
        sha256_json(self)
    }
}
