//! A trained generator bundled with the geometry and scaling it was trained on.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::VocoderConfig;
use crate::cgan::{Checkpoint, Generator, NetConfig};
use crate::channel_sim::DatasetStats;
use crate::error::{Error, Result};
use crate::signal_prep::{prepare_trace, PrepConfig, RawAccelTrace, UniformSeries};
use crate::spectral::{Matrix, MelFilterbank, SpectralConfig, SpectroImage};
use crate::vocoder::{griffin_lim, GriffinLimConfig};

pub const MODEL_FILE: &str = "model.json";

/// Everything besides weights needed to run a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCard {
    pub net: NetConfig,
    pub spectral: SpectralConfig,
    pub prep: PrepConfig,
    pub stats: DatasetStats,
    pub noise_seed: u64,
}

impl ModelCard {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(dir.join(MODEL_FILE), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MODEL_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Mel image to waveform: undo the scaling, pseudo-invert the filterbank,
/// interpolate frames in time and recover phase.
#[derive(Debug, Clone)]
pub struct Vocoder {
    spectral: SpectralConfig,
    fb: MelFilterbank,
    upsample: usize,
    gl: GriffinLimConfig,
}

impl Vocoder {
    pub fn new(spectral: SpectralConfig, cfg: &VocoderConfig) -> Result<Self> {
        let hop = spectral.audio_segment_len() / spectral.image_size;
        if cfg.time_upsample == 0 || hop % cfg.time_upsample != 0 {
            return Err(Error::Parameter(format!(
                "time_upsample {} must divide the audio hop {hop}",
                cfg.time_upsample
            )));
        }
        Ok(Self {
            fb: spectral.filterbank()?,
            upsample: cfg.time_upsample,
            gl: GriffinLimConfig {
                iterations: cfg.iterations,
                n_fft: spectral.audio_n_fft,
                hop: hop / cfg.time_upsample,
                momentum: cfg.momentum,
                random_init_seed: None,
            },
            spectral,
        })
    }

    pub fn filterbank(&self) -> &MelFilterbank {
        &self.fb
    }

    /// One segment of audio from a target-style mel image.
    pub fn synthesize(&self, image: &SpectroImage) -> Result<UniformSeries> {
        let linear = self.spectral.mel_image_to_linear(image, &self.fb)?;
        let dense = upsample_cols(&linear, self.upsample);
        let out = griffin_lim(
            &dense,
            self.spectral.audio_rate_hz as f64,
            &self.gl,
            Some(self.spectral.audio_segment_len()),
        )?;
        Ok(out.series)
    }
}

/// Linear interpolation between adjacent columns, `factor − 1` new columns
/// per gap.
pub fn upsample_cols(m: &Matrix, factor: usize) -> Matrix {
    if factor <= 1 || m.cols() < 2 {
        return m.clone();
    }
    let cols = (m.cols() - 1) * factor + 1;
    let mut out = Matrix::zeros(m.rows(), cols);
    for c in 0..cols {
        let (j, k) = (c / factor, c % factor);
        let w = k as f64 / factor as f64;
        for r in 0..m.rows() {
            out[(r, c)] = if k == 0 {
                m[(r, j)]
            } else {
                (1.0 - w) * m[(r, j)] + w * m[(r, j + 1)]
            };
        }
    }
    out
}

/// Per-segment products of a reconstruction.
#[derive(Debug, Clone)]
pub struct SegmentReconstruction {
    pub condition: SpectroImage,
    pub generated: SpectroImage,
    pub audio: UniformSeries,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub card: ModelCard,
    pub generator: Generator,
    pub checkpoint: PathBuf,
}

impl Model {
    /// Loads a checkpoint and the `model.json` next to it.
    pub fn load(checkpoint: &Path) -> Result<Self> {
        let dir = checkpoint.parent().unwrap_or(Path::new("."));
        let card = ModelCard::load(dir)?;
        let ckpt = Checkpoint::load(checkpoint, &card.net)?;
        let mut generator = Generator::new(card.net, 0)?;
        let mut tensors = ckpt.tensors;
        generator.import(&mut tensors)?;
        Ok(Self {
            card,
            generator,
            checkpoint: checkpoint.to_path_buf(),
        })
    }

    pub fn from_parts(card: ModelCard, generator: Generator) -> Self {
        Self {
            card,
            generator,
            checkpoint: PathBuf::new(),
        }
    }

    /// Condition image of one conditioned accelerometer segment.
    pub fn condition_image(&self, accel_segment: &[f64]) -> Result<SpectroImage> {
        let s = &self.card.spectral;
        s.condition_image(&s.accel_features(accel_segment)?, self.card.stats.condition)
    }

    /// Target-style image of one audio segment.
    pub fn target_image(&self, audio_segment: &[f64], fb: &MelFilterbank) -> Result<SpectroImage> {
        let s = &self.card.spectral;
        s.target_image(&s.audio_features(audio_segment, fb)?, self.card.stats.target)
    }

    /// Generated mel image for segment `index` of a recording.
    pub fn generate(&self, condition: &SpectroImage, index: usize) -> Result<SpectroImage> {
        self.generator
            .generate(condition, self.card.noise_seed.wrapping_add(index as u64))
    }

    /// Reconstructs every whole segment of `trace`; segments run in parallel.
    pub fn reconstruct_trace(
        &self,
        trace: &RawAccelTrace,
        vocoder: &Vocoder,
    ) -> Result<Vec<SegmentReconstruction>> {
        let segments = prepare_trace(trace, &self.card.prep)?;
        if segments.is_empty() {
            return Err(Error::Input(format!(
                "trace of {:.3} s is shorter than one {} s segment",
                trace.duration_s(),
                self.card.prep.segment_seconds
            )));
        }
        segments
            .par_iter()
            .enumerate()
            .map(|(k, seg)| {
                let condition = self.condition_image(&seg.values)?;
                let generated = self.generate(&condition, k)?;
                let audio = vocoder.synthesize(&generated)?;
                Ok(SegmentReconstruction { condition, generated, audio })
            })
            .collect()
    }
}

/// Concatenation of equal-rate series.
pub fn concat(series: &[UniformSeries]) -> Result<UniformSeries> {
    let rate = series
        .first()
        .map(|s| s.rate_hz())
        .ok_or_else(|| Error::Input("nothing to concatenate".into()))?;
    let mut values = Vec::new();
    for s in series {
        values.extend_from_slice(s.values());
    }
    UniformSeries::new(rate, values)
}
