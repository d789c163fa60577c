use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::signal_prep::UniformSeries;

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// One-sided short-time spectrum, stored frame-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    data: Vec<Complex64>,
    bins: usize,
    frames: usize,
    rate_hz: f64,
    n_fft: usize,
    hop: usize,
}

impl ComplexSpectrogram {
    pub fn from_frames(
        data: Vec<Complex64>,
        frames: usize,
        rate_hz: f64,
        n_fft: usize,
        hop: usize,
    ) -> Result<Self> {
        let bins = n_fft / 2 + 1;
        if frames == 0 || data.len() != bins * frames {
            return Err(Error::Shape(format!(
                "{} values for {bins} bins x {frames} frames",
                data.len()
            )));
        }
        Ok(Self {
            data,
            bins,
            frames,
            rate_hz,
            n_fft,
            hop,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }
    pub fn frames(&self) -> usize {
        self.frames
    }
    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }
    pub fn n_fft(&self) -> usize {
        self.n_fft
    }
    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn get(&self, bin: usize, frame: usize) -> Complex64 {
        self.data[frame * self.bins + bin]
    }

    pub fn frame(&self, frame: usize) -> &[Complex64] {
        &self.data[frame * self.bins..(frame + 1) * self.bins]
    }

    pub fn frame_mut(&mut self, frame: usize) -> &mut [Complex64] {
        let b = self.bins;
        &mut self.data[frame * b..(frame + 1) * b]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    /// Magnitudes as a bins × frames matrix.
    pub fn magnitude(&self) -> super::Matrix {
        let mut m = super::Matrix::zeros(self.bins, self.frames);
        for t in 0..self.frames {
            for (k, c) in self.frame(t).iter().enumerate() {
                m[(k, t)] = c.norm();
            }
        }
        m
    }
}

/// Reusable STFT/ISTFT plan for one (n_fft, hop) pair with a Hann window.
///
/// Framing is centered: frame `t` is centered on sample `t * hop` of the
/// input, which is extended by `n_fft / 2` reflected samples on each side.
#[derive(Clone)]
pub struct StftPlan {
    n_fft: usize,
    hop: usize,
    window: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StftPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StftPlan")
            .field("n_fft", &self.n_fft)
            .field("hop", &self.hop)
            .finish()
    }
}

impl StftPlan {
    pub fn new(n_fft: usize, hop: usize) -> Result<Self> {
        if n_fft < 2 || !n_fft.is_power_of_two() {
            return Err(Error::Parameter(format!("n_fft {n_fft} must be a power of two")));
        }
        if hop == 0 || hop > n_fft {
            return Err(Error::Parameter(format!(
                "hop {hop} must lie in 1..={n_fft}"
            )));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n_fft,
            hop,
            window: hann(n_fft),
            forward: planner.plan_fft_forward(n_fft),
            inverse: planner.plan_fft_inverse(n_fft),
        })
    }

    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Number of centered frames for a signal of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        1 + len / self.hop
    }

    pub fn stft(&self, signal: &[f64], rate_hz: f64) -> Result<ComplexSpectrogram> {
        let n = self.n_fft;
        if signal.len() < n {
            return Err(Error::Input(format!(
                "signal of {} samples shorter than one {n}-sample frame",
                signal.len()
            )));
        }
        let pad = n / 2;
        let len = signal.len();
        let padded: Vec<f64> = (0..len + 2 * pad)
            .map(|i| {
                let j = i as isize - pad as isize;
                let j = if j < 0 {
                    -j
                } else if j >= len as isize {
                    2 * (len as isize - 1) - j
                } else {
                    j
                };
                signal[j as usize]
            })
            .collect();

        let frames = self.frames_for(len);
        let bins = self.bins();
        let mut data = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.forward.get_inplace_scratch_len()];
        for t in 0..frames {
            let start = t * self.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(padded[start + i] * self.window[i], 0.0);
            }
            self.forward.process_with_scratch(&mut buf, &mut scratch);
            data.extend_from_slice(&buf[..bins]);
        }
        ComplexSpectrogram::from_frames(data, frames, rate_hz, n, self.hop)
    }

    /// Weighted overlap-add inverse. `length` defaults to `(frames - 1) * hop`.
    pub fn istft(&self, spec: &ComplexSpectrogram, length: Option<usize>) -> Result<UniformSeries> {
        let n = self.n_fft;
        if spec.n_fft() != n || spec.hop() != self.hop {
            return Err(Error::Shape(format!(
                "spectrogram grid ({}, {}) does not match plan ({n}, {})",
                spec.n_fft(),
                spec.hop(),
                self.hop
            )));
        }
        if self.hop > n / 2 {
            return Err(Error::Parameter(format!(
                "hop {} violates Hann overlap-add (needs hop <= {})",
                self.hop,
                n / 2
            )));
        }
        let frames = spec.frames();
        let pad = n / 2;
        let total = (frames - 1) * self.hop + n;
        let mut out = vec![0.0; total];
        let mut norm = vec![0.0; total];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let scale = 1.0 / n as f64;
        for t in 0..frames {
            let frame = spec.frame(t);
            buf[..=n / 2].copy_from_slice(frame);
            // Hermitian completion; DC and Nyquist must be real for a real signal.
            buf[0].im = 0.0;
            buf[n / 2].im = 0.0;
            for k in 1..n / 2 {
                buf[n - k] = frame[k].conj();
            }
            self.inverse.process_with_scratch(&mut buf, &mut scratch);
            let start = t * self.hop;
            for i in 0..n {
                let w = self.window[i];
                out[start + i] += buf[i].re * scale * w;
                norm[start + i] += w * w;
            }
        }
        let length = length.unwrap_or((frames - 1) * self.hop);
        let values = (0..length)
            .map(|i| {
                let j = i + pad;
                if j < total && norm[j] > 1e-10 {
                    out[j] / norm[j]
                } else {
                    0.0
                }
            })
            .collect();
        UniformSeries::new(spec.rate_hz(), values)
    }
}

pub fn stft(series: &UniformSeries, n_fft: usize, hop: usize) -> Result<ComplexSpectrogram> {
    StftPlan::new(n_fft, hop)?.stft(series.values(), series.rate_hz())
}

pub fn istft(spec: &ComplexSpectrogram) -> Result<UniformSeries> {
    StftPlan::new(spec.n_fft(), spec.hop())?.istft(spec, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn impulse_at_frame_center_is_flat() {
        let mut x = vec![0.0; 1024];
        let hop = 64;
        let t = 5;
        x[t * hop] = 1.0;
        let s = stft(&UniformSeries::new(1000.0, x).unwrap(), 256, hop).unwrap();
        for k in 0..s.bins() {
            assert!((s.get(k, t).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn sinusoid_peaks_at_its_bin() {
        let n_fft = 256;
        let rate = 1000.0;
        let bin = 20;
        let f = bin as f64 * rate / n_fft as f64;
        let x: Vec<f64> = (0..2048)
            .map(|i| (2.0 * PI * f * i as f64 / rate).sin())
            .collect();
        let s = stft(&UniformSeries::new(rate, x).unwrap(), n_fft, 64).unwrap();
        let m = s.magnitude();
        for t in 2..s.frames() - 2 {
            let argmax = (0..s.bins())
                .max_by(|&a, &b| m[(a, t)].total_cmp(&m[(b, t)]))
                .unwrap();
            assert_eq!(argmax, bin);
        }
    }

    #[test]
    fn parseval_per_frame() {
        let n_fft = 256;
        let hop = 64;
        let x = noise(2000, 3);
        let plan = StftPlan::new(n_fft, hop).unwrap();
        let s = plan.stft(&x, 1000.0).unwrap();
        // Independent framing: reflect-pad and window by hand.
        let pad = n_fft / 2;
        let len = x.len() as isize;
        let at = |i: isize| {
            let j = i - pad as isize;
            let j = if j < 0 { -j } else if j >= len { 2 * (len - 1) - j } else { j };
            x[j as usize]
        };
        let w = hann(n_fft);
        let mut windowed = 0.0;
        for t in 0..s.frames() {
            for i in 0..n_fft {
                windowed += (at((t * hop + i) as isize) * w[i]).powi(2);
            }
        }
        let mut spectral = 0.0;
        for t in 0..s.frames() {
            for k in 0..s.bins() {
                let weight = if k == 0 || k == n_fft / 2 { 1.0 } else { 2.0 };
                spectral += weight * s.get(k, t).norm_sqr();
            }
        }
        spectral /= n_fft as f64;
        assert!(((spectral - windowed) / windowed).abs() < 1e-6);
    }

    fn round_trip_error(x: &[f64], n_fft: usize, hop: usize) -> f64 {
        let plan = StftPlan::new(n_fft, hop).unwrap();
        let s = plan.stft(x, 1000.0).unwrap();
        let y = plan.istft(&s, Some(x.len())).unwrap();
        x.iter()
            .zip(y.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn round_trip_noise_and_sine() {
        assert!(round_trip_error(&noise(4000, 9), 256, 64) < 1e-6);
        let sine: Vec<f64> = (0..4000)
            .map(|i| (2.0 * PI * 100.0 * i as f64 / 1000.0).sin())
            .collect();
        assert!(round_trip_error(&sine, 256, 64) < 1e-6);
    }

    #[test]
    fn zero_spectrogram_inverts_to_zero() {
        let s = ComplexSpectrogram::from_frames(
            vec![Complex64::new(0.0, 0.0); 129 * 10],
            10,
            1000.0,
            256,
            64,
        )
        .unwrap();
        assert!(istft(&s).unwrap().values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_bad_parameters() {
        let short = UniformSeries::new(1000.0, vec![0.0; 100]).unwrap();
        assert!(matches!(stft(&short, 256, 64), Err(Error::Input(_))));
        assert!(matches!(StftPlan::new(250, 64), Err(Error::Parameter(_))));
        let x = UniformSeries::new(1000.0, vec![0.0; 1000]).unwrap();
        let s = stft(&x, 256, 200).unwrap();
        assert!(matches!(istft(&s), Err(Error::Parameter(_))));
    }
}
