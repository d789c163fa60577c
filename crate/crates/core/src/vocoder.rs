//! Griffin-Lim phase retrieval and WAV output.

use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_prep::UniformSeries;
use crate::spectral::{hann, Matrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GriffinLimConfig {
    pub iterations: usize,
    pub n_fft: usize,
    pub hop: usize,
    /// Extrapolation weight of the accelerated variant; 0 is classic Griffin-Lim.
    pub momentum: f64,
    /// Start from uniformly random phase drawn from this seed instead of zero.
    pub random_init_seed: Option<u64>,
}

impl Default for GriffinLimConfig {
    fn default() -> Self {
        Self {
            iterations: 60,
            n_fft: 2048,
            hop: 1000,
            momentum: 0.0,
            random_init_seed: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GriffinLimOutput {
    pub series: UniformSeries,
    /// Consistency error `‖|STFT(x_i)| − M‖` after each iteration.
    pub errors: Vec<f64>,
}

/// Frame transforms over an uncentered buffer, so that synthesis is the exact
/// least-squares inverse of analysis and each iteration is a true projection.
struct Frames {
    n: usize,
    hop: usize,
    window: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    norm: Vec<f64>,
}

impl Frames {
    fn new(n: usize, hop: usize, frames: usize) -> Self {
        let window = hann(n);
        let mut planner = FftPlanner::new();
        let len = (frames - 1) * hop + n;
        let mut norm = vec![0.0; len];
        for t in 0..frames {
            for (i, w) in window.iter().enumerate() {
                norm[t * hop + i] += w * w;
            }
        }
        Self {
            n,
            hop,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            window,
            norm,
        }
    }

    fn bins(&self) -> usize {
        self.n / 2 + 1
    }

    fn analyze(&self, x: &[f64], out: &mut [Complex64]) {
        let bins = self.bins();
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n];
        for (t, frame) in out.chunks_mut(bins).enumerate() {
            let start = t * self.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(x[start + i] * self.window[i], 0.0);
            }
            self.fwd.process(&mut buf);
            frame.copy_from_slice(&buf[..bins]);
        }
    }

    fn synthesize(&self, spec: &[Complex64], x: &mut [f64]) {
        let n = self.n;
        let bins = self.bins();
        x.fill(0.0);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let scale = 1.0 / n as f64;
        for (t, frame) in spec.chunks(bins).enumerate() {
            buf[..bins].copy_from_slice(frame);
            buf[0].im = 0.0;
            buf[n / 2].im = 0.0;
            for k in 1..n / 2 {
                buf[n - k] = frame[k].conj();
            }
            self.inv.process(&mut buf);
            let start = t * self.hop;
            for i in 0..n {
                x[start + i] += buf[i].re * scale * self.window[i];
            }
        }
        for (v, w) in x.iter_mut().zip(&self.norm) {
            *v = if *w > 1e-10 { *v / w } else { 0.0 };
        }
    }
}

/// Weight of a one-sided bin in the full two-sided energy.
fn bin_weight(k: usize, bins: usize) -> f64 {
    if k == 0 || k + 1 == bins {
        1.0
    } else {
        2.0
    }
}

/// Waveform whose STFT magnitude approximates `magnitude` (bins × frames).
///
/// The STFT grid is the centered one used by the spectral module: the output
/// has `(frames − 1)·hop` samples unless `length` is given.
pub fn griffin_lim(
    magnitude: &Matrix,
    rate_hz: f64,
    cfg: &GriffinLimConfig,
    length: Option<usize>,
) -> Result<GriffinLimOutput> {
    if cfg.iterations == 0 {
        return Err(Error::Parameter("iterations must be >= 1".into()));
    }
    if cfg.n_fft < 4 || !cfg.n_fft.is_power_of_two() || cfg.hop == 0 || cfg.hop > cfg.n_fft / 2 {
        return Err(Error::Parameter(format!(
            "need power-of-two n_fft with 1 <= hop <= n_fft/2, got ({}, {})",
            cfg.n_fft, cfg.hop
        )));
    }
    let bins = cfg.n_fft / 2 + 1;
    if magnitude.rows() != bins || magnitude.cols() == 0 {
        return Err(Error::Parameter(format!(
            "magnitude has {} rows, n_fft {} needs {bins}",
            magnitude.rows(),
            cfg.n_fft
        )));
    }
    if magnitude.as_slice().iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Parameter("magnitude must be finite and non-negative".into()));
    }
    let frames = magnitude.cols();
    let plan = Frames::new(cfg.n_fft, cfg.hop, frames);
    // Frame-major copy of the target magnitude.
    let mut target = vec![0.0; bins * frames];
    for t in 0..frames {
        for k in 0..bins {
            target[t * bins + k] = magnitude[(k, t)];
        }
    }
    let mut spec: Vec<Complex64> = match cfg.random_init_seed {
        None => target.iter().map(|&m| Complex64::new(m, 0.0)).collect(),
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            target
                .iter()
                .map(|&m| Complex64::from_polar(m, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)))
                .collect()
        }
    };
    let len = (frames - 1) * cfg.hop + cfg.n_fft;
    let mut x = vec![0.0; len];
    let mut analysis = vec![Complex64::new(0.0, 0.0); bins * frames];
    let mut previous: Option<Vec<Complex64>> = None;
    let mut errors = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        plan.synthesize(&spec, &mut x);
        plan.analyze(&x, &mut analysis);
        let mut err = 0.0;
        for (i, (a, &m)) in analysis.iter().zip(&target).enumerate() {
            let d = a.norm() - m;
            err += bin_weight(i % bins, bins) * d * d;
        }
        errors.push(err.sqrt());
        let projected: Vec<Complex64> = analysis
            .iter()
            .zip(&target)
            .map(|(a, &m)| {
                let r = a.norm();
                if r > 1e-12 {
                    a * (m / r)
                } else {
                    Complex64::new(m, 0.0)
                }
            })
            .collect();
        spec = match (&previous, cfg.momentum) {
            (Some(prev), alpha) if alpha != 0.0 => projected
                .iter()
                .zip(prev)
                .map(|(p, q)| p + (p - q) * alpha)
                .collect(),
            _ => projected.clone(),
        };
        previous = Some(projected);
    }
    plan.synthesize(&spec, &mut x);
    let pad = cfg.n_fft / 2;
    let out_len = length.unwrap_or((frames - 1) * cfg.hop);
    let values = (0..out_len).map(|i| x.get(i + pad).copied().unwrap_or(0.0)).collect();
    Ok(GriffinLimOutput {
        series: UniformSeries::new(rate_hz, values)?,
        errors,
    })
}

/// Final consistency error relative to the target's energy.
pub fn relative_error(magnitude: &Matrix, out: &GriffinLimOutput) -> f64 {
    let bins = magnitude.rows();
    let mut e = 0.0;
    for t in 0..magnitude.cols() {
        for k in 0..bins {
            e += bin_weight(k, bins) * magnitude[(k, t)].powi(2);
        }
    }
    match out.errors.last() {
        Some(last) if e > 0.0 => last / e.sqrt(),
        _ => 0.0,
    }
}

/// 16-bit PCM mono WAV peak-normalized to `peak_dbfs` (silence stays silent).
pub fn write_wav<W: std::io::Write + std::io::Seek>(w: W, series: &UniformSeries, peak_dbfs: f64) -> Result<()> {
    let rate = series.rate_hz().round();
    if !(rate >= 1.0 && rate <= u32::MAX as f64) {
        return Err(Error::Parameter(format!("cannot write a WAV at {} Hz", series.rate_hz())));
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: rate as u32,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let peak = series.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { 10f64.powf(peak_dbfs / 20.0) / peak } else { 0.0 };
    let mut writer = hound::WavWriter::new(w, spec)?;
    for v in series.values() {
        let s = (v * gain * i16::MAX as f64).round().clamp(i16::MIN as f64, i16::MAX as f64);
        writer.write_sample(s as i16)?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn save_wav(path: &Path, series: &UniformSeries) -> Result<()> {
    let file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_wav(file, series, -1.0)
}

/// Reads a WAV as samples in `[-1, 1]`, averaging channels.
pub fn read_wav<R: std::io::Read>(r: R) -> Result<UniformSeries> {
    let reader = hound::WavReader::new(r)?;
    let spec = reader.spec();
    let ch = spec.channels.max(1) as usize;
    let samples: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader.into_samples::<f32>().map(|s| s.map(f64::from)).collect::<Result<_, _>>()?,
        hound::SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()?
        }
    };
    let mono = samples.chunks(ch).map(|c| c.iter().sum::<f64>() / ch as f64).collect();
    UniformSeries::new(spec.sample_rate as f64, mono)
}

pub fn load_wav(path: &Path) -> Result<UniformSeries> {
    read_wav(std::io::BufReader::new(std::fs::File::open(path)?))
}
