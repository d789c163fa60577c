//! Run configuration: one TOML file of `[section]` key-value tables.
//!
//! ```toml
//! [simulate]
//! sensor_rate_hz = 500.0
//! scene = "quiet-room"
//!
//! [spectral]
//! image_size = 64
//!
//! [train]
//! epochs = 30
//! ```
//!
//! Missing keys take their defaults, unknown keys are rejected, and
//! `section.key=value` overrides from the command line win over the file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cgan::{NetConfig, TrainConfig};
use crate::channel_sim::{DatasetOptions, Scene, ScenePreset, SensorProfile};
use crate::error::{Error, Result};
use crate::metrics::MfccConfig;
use crate::signal_prep::PrepConfig;
use crate::spectral::SpectralConfig;
use crate::vocoder::GriffinLimConfig;

pub const RUN_CONFIG_FILE: &str = "run_config.toml";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub sensor_rate_hz: f64,
    pub scene: Scene,
    pub volume: f64,
    pub split_ratio: f64,
    /// Overrides of the sensor preset.
    pub jitter_ns: Option<f64>,
    pub noise_floor: Option<f64>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            sensor_rate_hz: 500.0,
            scene: Scene::None,
            volume: 1.0,
            split_ratio: 0.9,
            jitter_ns: None,
            noise_floor: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub base_channels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            base_channels: NetConfig::default().base_channels,
        }
    }
}

/// Griffin-Lim settings; the FFT size comes from the spectral section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocoderConfig {
    pub iterations: usize,
    pub momentum: f64,
    /// Mel-image columns are linearly interpolated by this factor before
    /// phase recovery, shrinking the hop by the same factor.
    pub time_upsample: usize,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        Self {
            iterations: 60,
            momentum: 0.0,
            time_upsample: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub simulate: SimulateConfig,
    pub prep: PrepConfig,
    pub spectral: SpectralConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub vocoder: VocoderConfig,
    pub mfcc: MfccConfig,
}

impl RunConfig {
    /// Reads `path` (if any), applies `section.key=value` overrides, then
    /// validates.
    pub fn resolve(path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for (key, raw) in overrides {
            set_key(&mut table, key, raw)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let sim = &self.simulate;
        if !(0.0..=1.0).contains(&sim.split_ratio) {
            return Err(Error::Config(format!("simulate.split_ratio {} outside [0, 1]", sim.split_ratio)));
        }
        if self.spectral.accel_rate_hz != self.prep.rate_hz {
            return Err(Error::Config(format!(
                "spectral.accel_rate_hz ({}) must equal prep.rate_hz ({})",
                self.spectral.accel_rate_hz, self.prep.rate_hz
            )));
        }
        if self.spectral.segment_seconds != self.prep.segment_seconds {
            return Err(Error::Config(format!(
                "spectral.segment_seconds ({}) must equal prep.segment_seconds ({})",
                self.spectral.segment_seconds, self.prep.segment_seconds
            )));
        }
        let hop = self.spectral.audio_segment_len() / self.spectral.image_size.max(1);
        if self.vocoder.time_upsample == 0 || hop % self.vocoder.time_upsample != 0 {
            return Err(Error::Config(format!(
                "vocoder.time_upsample ({}) must divide the audio hop ({hop})",
                self.vocoder.time_upsample
            )));
        }
        if self.vocoder.iterations == 0 {
            return Err(Error::Config("vocoder.iterations must be >= 1".into()));
        }
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.net().validate().map_err(cfg_err)?;
        self.train.validate().map_err(cfg_err)?;
        self.dataset_options().map_err(cfg_err)?.validate().map_err(cfg_err)?;
        self.spectral.filterbank().map_err(cfg_err)?;
        Ok(())
    }

    pub fn net(&self) -> NetConfig {
        NetConfig {
            image_size: self.spectral.image_size,
            base_channels: self.model.base_channels,
        }
    }

    pub fn profile(&self) -> Result<SensorProfile> {
        let mut p = SensorProfile::preset(self.simulate.sensor_rate_hz)?;
        if let Some(j) = self.simulate.jitter_ns {
            p.jitter_ns = j;
        }
        if let Some(n) = self.simulate.noise_floor {
            p.noise_floor = n;
        }
        Ok(p)
    }

    pub fn dataset_options(&self) -> Result<DatasetOptions> {
        Ok(DatasetOptions {
            profile: self.profile()?,
            scene: ScenePreset {
                scene: self.simulate.scene,
                volume: self.simulate.volume,
            },
            seed: self.simulate.seed,
            split_ratio: self.simulate.split_ratio,
            spectral: self.spectral,
            prep: self.prep,
        })
    }

    /// Phase recovery on the upsampled audio STFT grid.
    pub fn griffin_lim(&self) -> GriffinLimConfig {
        let hop = self.spectral.audio_segment_len() / self.spectral.image_size;
        GriffinLimConfig {
            iterations: self.vocoder.iterations,
            n_fft: self.spectral.audio_n_fft,
            hop: hop / self.vocoder.time_upsample,
            momentum: self.vocoder.momentum,
            random_init_seed: None,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(RUN_CONFIG_FILE), self.to_toml())?;
        Ok(())
    }
}

/// Parses `section.key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{s}` is not key=value")))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn set_key(table: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let (section, name) = key
        .split_once('.')
        .ok_or_else(|| Error::Config(format!("key `{key}` must look like section.key")))?;
    // Values parse as TOML literals; anything else is taken as a bare string.
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(name.to_string(), value);
            Ok(())
        }
        _ => Err(Error::Config(format!("`{section}` is not a table"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[train]\nepochs = 7\nphase1_epochs = 2\n[simulate]\nscene = \"street\"\n").unwrap();
        let o = vec![parse_override("train.epochs=9").unwrap()];
        let cfg = RunConfig::resolve(Some(&path), &o).unwrap();
        assert_eq!(cfg.train.epochs, 9);
        assert_eq!(cfg.train.phase1_epochs, 2);
        assert_eq!(cfg.simulate.scene, Scene::Street);
        assert_eq!(cfg.train.lr, TrainConfig::default().lr);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(RunConfig::from_toml("[train]\nepoch = 3\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("bogus = 1\n"), Err(Error::Config(_))));
        assert!(RunConfig::from_toml("[spectral]\nimage_size = 48\n").is_err());
        assert!(RunConfig::from_toml("[simulate]\nsensor_rate_hz = 300.0\n").is_err());
        assert!(RunConfig::from_toml("[prep]\nrate_hz = 800.0\n").is_err());
        let o = vec![parse_override("simulate.scene=walking").unwrap()];
        assert_eq!(RunConfig::resolve(None, &o).unwrap().simulate.scene, Scene::Walking);
    }
}
