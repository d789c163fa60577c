use serde::{Deserialize, Serialize};

use super::{
    build_mel_filterbank, compress_and_normalize, mel_to_linear, Compression, FreqAxis,
    Matrix, MelFilterbank, NormStats, SpectroImage, StftPlan,
};
use crate::error::{Error, Result};
use crate::signal_prep::UniformSeries;

/// Geometry shared by the condition and target images.
///
/// Both spectrograms use a column hop of `segment_samples / image_size`,
/// so column `t` of either image is centered on the same instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub image_size: usize,
    pub segment_seconds: f64,
    pub accel_rate_hz: f64,
    pub accel_n_fft: usize,
    pub audio_rate_hz: u32,
    pub audio_n_fft: usize,
    pub mel_fmin_hz: f64,
    pub mel_fmax_hz: f64,
    /// Scale each condition image by its own range instead of the dataset's.
    pub per_image_norm: bool,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            image_size: 128,
            segment_seconds: 4.0,
            accel_rate_hz: 1000.0,
            accel_n_fft: 256,
            audio_rate_hz: 16_000,
            audio_n_fft: 2048,
            mel_fmin_hz: 0.0,
            mel_fmax_hz: 8000.0,
            per_image_norm: false,
        }
    }
}

impl SpectralConfig {
    pub fn accel_segment_len(&self) -> usize {
        (self.segment_seconds * self.accel_rate_hz).round() as usize
    }

    pub fn audio_segment_len(&self) -> usize {
        (self.segment_seconds * self.audio_rate_hz as f64).round() as usize
    }

    pub fn accel_plan(&self) -> Result<StftPlan> {
        StftPlan::new(self.accel_n_fft, self.accel_segment_len() / self.image_size)
    }

    pub fn audio_plan(&self) -> Result<StftPlan> {
        StftPlan::new(self.audio_n_fft, self.audio_segment_len() / self.image_size)
    }

    pub fn filterbank(&self) -> Result<MelFilterbank> {
        build_mel_filterbank(
            self.image_size,
            self.audio_n_fft,
            self.audio_rate_hz as f64,
            self.mel_fmin_hz,
            self.mel_fmax_hz,
        )
    }

    pub fn seconds_per_col(&self) -> f64 {
        self.segment_seconds / self.image_size as f64
    }

    pub fn accel_axis(&self) -> FreqAxis {
        FreqAxis::Linear {
            hz_per_row: self.accel_rate_hz / 2.0 / (self.image_size - 1) as f64,
        }
    }

    pub fn mel_axis(&self) -> FreqAxis {
        FreqAxis::Mel {
            fmin_hz: self.mel_fmin_hz,
            fmax_hz: self.mel_fmax_hz,
        }
    }

    /// Square-root compressed accelerometer magnitude fitted to the image
    /// grid, before normalization.
    pub fn accel_features(&self, segment: &[f64]) -> Result<Matrix> {
        let mag = self.accel_plan()?.stft(segment, self.accel_rate_hz)?.magnitude();
        Ok(compress_fit(&mag, Compression::Sqrt, self.image_size))
    }

    /// log1p-compressed mel magnitude fitted to the image grid.
    pub fn audio_features(&self, segment: &[f64], fb: &MelFilterbank) -> Result<Matrix> {
        let mag = self
            .audio_plan()?
            .stft(segment, self.audio_rate_hz as f64)?
            .magnitude();
        Ok(compress_fit(&fb.apply(&mag)?, Compression::Log1p, self.image_size))
    }

    pub fn condition_image(&self, features: &Matrix, stats: NormStats) -> Result<SpectroImage> {
        let stats = match NormStats::from_matrices([features]) {
            // A flat image has no range of its own.
            Some(own) if self.per_image_norm && own.max > own.min => own,
            _ => stats,
        };
        self.normalized_image(features, stats, Compression::Sqrt, self.accel_axis())
    }

    pub fn target_image(&self, features: &Matrix, stats: NormStats) -> Result<SpectroImage> {
        self.normalized_image(features, stats, Compression::Log1p, self.mel_axis())
    }

    fn normalized_image(
        &self,
        features: &Matrix,
        stats: NormStats,
        compression: Compression,
        axis: FreqAxis,
    ) -> Result<SpectroImage> {
        // Features are already compressed, so normalize them as identity data.
        let mut raw = features.clone();
        raw.map_inplace(|v| compression.invert(v));
        let norm = compress_and_normalize(&raw, stats, compression, None)?;
        SpectroImage::from_normalized(&norm, compression, stats, axis, self.seconds_per_col())
    }

    /// Linear-frequency magnitude on the full audio STFT grid for a mel image.
    ///
    /// Columns cropped while fitting the image are restored by repeating the
    /// nearest edge column.
    pub fn mel_image_to_linear(&self, img: &SpectroImage, fb: &MelFilterbank) -> Result<Matrix> {
        if img.rows() != fb.n_mels() {
            return Err(Error::Shape(format!(
                "image has {} rows, filterbank {} bands",
                img.rows(),
                fb.n_mels()
            )));
        }
        let mel = img.denormalize();
        let plan = self.audio_plan()?;
        let frames = plan.frames_for(self.audio_segment_len());
        let offset = (frames as isize - img.cols() as isize).div_euclid(2);
        let mut full = Matrix::zeros(mel.rows(), frames);
        for f in 0..frames {
            let c = (f as isize - offset).clamp(0, img.cols() as isize - 1) as usize;
            for r in 0..mel.rows() {
                full[(r, f)] = mel[(r, c)];
            }
        }
        mel_to_linear(&full, fb)
    }
}

fn compress_fit(mag: &Matrix, compression: Compression, size: usize) -> Matrix {
    let mut m = mag.clone();
    m.map_inplace(|v| compression.apply(v));
    m.resample_rows(size).fit_cols(size).0
}

/// Mel-spectrogram target image for one audio segment.
pub fn audio_to_mel(
    series: &UniformSeries,
    cfg: &SpectralConfig,
    stats: NormStats,
) -> Result<SpectroImage> {
    if (series.rate_hz() - cfg.audio_rate_hz as f64).abs() > 1e-9 {
        return Err(Error::Input(format!(
            "audio at {} Hz, expected {} Hz",
            series.rate_hz(),
            cfg.audio_rate_hz
        )));
    }
    let fb = cfg.filterbank()?;
    let features = cfg.audio_features(series.values(), &fb)?;
    cfg.target_image(&features, stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg() -> SpectralConfig {
        SpectralConfig::default()
    }

    #[test]
    fn silence_maps_to_black() {
        let c = cfg();
        let s = UniformSeries::new(16000.0, vec![0.0; c.audio_segment_len()]).unwrap();
        let img = audio_to_mel(&s, &c, NormStats { min: 0.0, max: 5.0 }).unwrap();
        assert_eq!((img.rows(), img.cols()), (128, 128));
        assert!(img.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tone_lights_its_mel_row() {
        let c = cfg();
        let x: Vec<f64> = (0..c.audio_segment_len())
            .map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / 16000.0).sin())
            .collect();
        let s = UniformSeries::new(16000.0, x).unwrap();
        let img = audio_to_mel(&s, &c, NormStats { min: 0.0, max: 8.0 }).unwrap();
        let fb = c.filterbank().unwrap();
        let expected = fb
            .centers_hz()
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - 440.0).abs().total_cmp(&(b.1 - 440.0).abs()))
            .unwrap()
            .0;
        for col in 10..118 {
            let argmax = (0..img.rows())
                .max_by(|&a, &b| img.get(a, col).total_cmp(&img.get(b, col)))
                .unwrap();
            assert!((argmax as isize - expected as isize).abs() <= 1, "col {col}: {argmax} vs {expected}");
        }
    }

    #[test]
    fn condition_and_target_share_columns() {
        let c = SpectralConfig { image_size: 64, ..cfg() };
        let accel = c.accel_features(&vec![0.1; c.accel_segment_len()]).unwrap();
        let fb = c.filterbank().unwrap();
        let audio = c.audio_features(&vec![0.1; c.audio_segment_len()], &fb).unwrap();
        assert_eq!(accel.cols(), audio.cols());
        assert_eq!((accel.rows(), audio.rows()), (64, 64));
    }

    #[test]
    fn per_image_norm_fills_the_range() {
        let c = SpectralConfig { image_size: 32, ..cfg() };
        let seg: Vec<f64> = (0..c.accel_segment_len()).map(|i| 0.01 * (i as f64 * 0.3).sin()).collect();
        let f = c.accel_features(&seg).unwrap();
        let wide = NormStats { min: 0.0, max: 100.0 };
        let global = c.condition_image(&f, wide).unwrap();
        assert!(global.pixels().iter().all(|&p| p < 0.1));
        let own = SpectralConfig { per_image_norm: true, ..c }.condition_image(&f, wide).unwrap();
        let max = own.pixels().iter().copied().fold(0.0f32, f32::max);
        assert!((max - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_wrong_rate() {
        let s = UniformSeries::new(8000.0, vec![0.0; 32000]).unwrap();
        assert!(audio_to_mel(&s, &cfg(), NormStats { min: 0.0, max: 1.0 }).is_err());
    }
}
