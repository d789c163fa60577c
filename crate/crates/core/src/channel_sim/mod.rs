//! Synthetic speaker-to-accelerometer side channel.
//!
//! The true mechanical transfer function is unknown; the model here is a
//! second-order low-pass response with a zero-phase anti-alias mask below
//! the sensor Nyquist, sampled at jittered instants, spread over three axes
//! with gravity on z, plus scene disturbances and a Gaussian noise floor.

mod corpus;
mod dataset;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_prep::{RawAccelTrace, UniformSeries};

pub use corpus::{synthesize_corpus, write_corpus, CorpusConfig, Utterance};
pub use dataset::{
    make_dataset, DatasetOptions, DatasetStats, PairedManifest, SegmentEntry, SegmentSignals, Split,
    WordOverlap, MANIFEST_FILE, MANIFEST_SCHEMA_VERSION,
};

pub const GRAVITY: f64 = 9.8;

/// Rates found on common handset accelerometers.
pub const PRESET_RATES: [f64; 8] = [167.0, 200.0, 250.0, 416.0, 418.0, 420.0, 425.0, 500.0];

/// Relative vibration amplitude on the x, y and z axes.
pub const AXIS_SPLIT: [f64; 3] = [0.2, 0.2, 1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorProfile {
    pub rate_hz: f64,
    /// Corner of the second-order low-pass response.
    pub corner_hz: f64,
    /// Acceleration (m/s²) per unit of audio amplitude in the passband.
    pub gain: f64,
    /// Standard deviation of timestamp jitter.
    pub jitter_ns: f64,
    /// RMS of the additive Gaussian noise on each axis (m/s²).
    pub noise_floor: f64,
    /// Added to z.
    pub gravity: f64,
    /// Peak acceleration of body movement in the walking scene (m/s²).
    pub movement_noise: f64,
}

impl SensorProfile {
    /// Preset for a sensor sampling at `rate_hz`; the response corner sits
    /// at 0.44 of the rate (220 Hz for a 500 Hz sensor).
    pub fn preset(rate_hz: f64) -> Result<Self> {
        if !PRESET_RATES.iter().any(|r| (r - rate_hz).abs() < 1e-9) {
            return Err(Error::Parameter(format!(
                "no sensor preset at {rate_hz} Hz; choose one of {PRESET_RATES:?}"
            )));
        }
        Ok(Self {
            rate_hz,
            corner_hz: 0.44 * rate_hz,
            gain: 1.0,
            jitter_ns: 50_000.0,
            noise_floor: 0.002,
            gravity: GRAVITY,
            movement_noise: 0.5,
        })
    }

    /// Same response with no noise and no jitter.
    pub fn quiet(self) -> Self {
        Self {
            jitter_ns: 0.0,
            noise_floor: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.rate_hz > 0.0
            && self.rate_hz.is_finite()
            && self.corner_hz > 0.0
            && self.gain >= 0.0
            && self.jitter_ns >= 0.0
            && self.noise_floor >= 0.0
            && self.movement_noise >= 0.0
            && self.gravity.is_finite();
        if !ok {
            return Err(Error::Parameter(format!("invalid sensor profile {self:?}")));
        }
        Ok(())
    }

    /// Magnitude response at `f_hz`, including the anti-alias mask.
    pub fn response(&self, f_hz: f64) -> f64 {
        let f = f_hz.abs();
        let lowpass = 1.0 / (1.0 + (f / self.corner_hz).powi(4)).sqrt();
        let nyq = self.rate_hz / 2.0;
        let (lo, hi) = (0.8 * nyq, 0.98 * nyq);
        let mask = if f <= lo {
            1.0
        } else if f >= hi {
            0.0
        } else {
            0.5 + 0.5 * (PI * (f - lo) / (hi - lo)).cos()
        };
        self.gain * lowpass * mask
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scene {
    #[default]
    None,
    QuietRoom,
    Restaurant,
    Street,
    /// Body movement below 20 Hz picked up directly by the sensor.
    Walking,
    Music,
}

impl fmt::Display for Scene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scene::None => "none",
            Scene::QuietRoom => "quiet-room",
            Scene::Restaurant => "restaurant",
            Scene::Street => "street",
            Scene::Walking => "walking",
            Scene::Music => "music",
        })
    }
}

impl FromStr for Scene {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Scene::None,
            "quiet-room" => Scene::QuietRoom,
            "restaurant" => Scene::Restaurant,
            "street" => Scene::Street,
            "walking" => Scene::Walking,
            "music" => Scene::Music,
            other => return Err(Error::Parameter(format!("unknown scene `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenePreset {
    pub scene: Scene,
    /// Playback volume applied to the speech, in `(0, 1]`.
    pub volume: f64,
}

impl Default for ScenePreset {
    fn default() -> Self {
        Self {
            scene: Scene::None,
            volume: 1.0,
        }
    }
}

impl ScenePreset {
    pub fn validate(&self) -> Result<()> {
        if !(self.volume > 0.0 && self.volume <= 1.0) {
            return Err(Error::Parameter(format!(
                "volume must lie in (0, 1], got {}",
                self.volume
            )));
        }
        Ok(())
    }
}

/// Acoustic disturbance played alongside the speech.
fn acoustic_disturbance(scene: Scene, n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let white = Normal::new(0.0, 1.0).expect("unit normal");
    match scene {
        Scene::None | Scene::Walking => vec![0.0; n],
        Scene::QuietRoom => (0..n).map(|_| 0.003 * white.sample(rng)).collect(),
        Scene::Restaurant => {
            // Murmur of voices: slowly wandering harmonic sources plus hiss.
            let voices: Vec<(f64, f64)> = (0..4)
                .map(|_| (rng.random_range(90.0..240.0), rng.random_range(0.0..2.0 * PI)))
                .collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / rate;
                    let speech: f64 = voices
                        .iter()
                        .map(|&(f0, ph)| {
                            let am = 0.5 + 0.5 * (2.0 * PI * 3.0 * t + ph).sin();
                            (1..6).map(|h| (2.0 * PI * f0 * h as f64 * t + ph).sin() / h as f64).sum::<f64>() * am
                        })
                        .sum();
                    0.02 * speech + 0.01 * white.sample(rng)
                })
                .collect()
        }
        Scene::Street => {
            // Integrated noise: traffic rumble concentrated at low frequency.
            let mut acc = 0.0;
            (0..n)
                .map(|_| {
                    acc = 0.999 * acc + 0.01 * white.sample(rng);
                    0.2 * acc + 0.005 * white.sample(rng)
                })
                .collect()
        }
        Scene::Music => {
            let chord: Vec<f64> = [261.6, 329.6, 392.0].iter().map(|f| f * rng.random_range(0.9..1.1)).collect();
            (0..n)
                .map(|i| {
                    let t = i as f64 / rate;
                    chord.iter().map(|f| (2.0 * PI * f * t).sin() + 0.3 * (4.0 * PI * f * t).sin()).sum::<f64>() * 0.02
                })
                .collect()
        }
    }
}

/// Zero-phase filtering by the profile response in the frequency domain.
fn apply_response(x: &[f64], rate: f64, profile: &SensorProfile) -> Vec<f64> {
    let n = x.len();
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, c) in buf.iter_mut().enumerate() {
        let f = k.min(n - k) as f64 * rate / n as f64;
        *c *= profile.response(f);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|c| c.re / n as f64).collect()
}

/// Linear interpolation of `x` (sampled at `rate`) at time `t`, clamped to the ends.
fn sample_at(x: &[f64], rate: f64, t: f64) -> f64 {
    let pos = (t * rate).max(0.0);
    let i = pos.floor() as usize;
    if i + 1 >= x.len() {
        return x[x.len() - 1];
    }
    let frac = pos - i as f64;
    x[i] + frac * (x[i + 1] - x[i])
}

/// Accelerometer trace induced by playing `audio` through the loudspeaker.
///
/// Sensor samples run from 0 to the audio duration inclusive. The first and
/// last timestamps are exact; the others are jittered but kept strictly
/// increasing.
pub fn simulate_trace(
    audio: &UniformSeries,
    profile: &SensorProfile,
    scene: &ScenePreset,
    seed: u64,
) -> Result<RawAccelTrace> {
    profile.validate()?;
    scene.validate()?;
    let rate = audio.rate_hz();
    let duration = audio.duration_s();
    let count = (duration * profile.rate_hz + 1e-9).floor() as usize + 1;
    if count < 2 || audio.len() < 2 {
        return Err(Error::Input(format!(
            "{:.4} s of audio is shorter than one sensor sample at {} Hz",
            duration, profile.rate_hz
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let disturbance = acoustic_disturbance(scene.scene, audio.len(), rate, &mut rng);
    let mixed: Vec<f64> = audio
        .values()
        .iter()
        .zip(&disturbance)
        .map(|(s, d)| scene.volume * s + d)
        .collect();
    let vib = apply_response(&mixed, rate, profile);

    let period_ns = 1e9 / profile.rate_hz;
    let jitter = Normal::new(0.0, profile.jitter_ns.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let limit = 0.45 * period_ns;
    let mut timestamps: Vec<i64> = Vec::with_capacity(count);
    for i in 0..count {
        let nominal = i as f64 * period_ns;
        let offset = if profile.jitter_ns > 0.0 && i > 0 && i + 1 < count {
            jitter.sample(&mut rng).clamp(-limit, limit)
        } else {
            0.0
        };
        let mut t = (nominal + offset).round() as i64;
        if let Some(&prev) = timestamps.last() {
            t = t.max(prev + 1);
        }
        timestamps.push(t);
    }

    let walk = if scene.scene == Scene::Walking {
        let step_hz = rng.random_range(1.6..2.2);
        let phases: Vec<f64> = (0..4).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        Some((step_hz, phases))
    } else {
        None
    };
    let noise = Normal::new(0.0, profile.noise_floor.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut samples = Vec::with_capacity(count);
    for &t_ns in &timestamps {
        let t = t_ns as f64 * 1e-9;
        let v = sample_at(&vib, rate, t);
        let motion = match &walk {
            Some((step, ph)) => {
                // Step frequency and harmonics, all below 10 Hz.
                profile.movement_noise
                    * ph.iter()
                        .enumerate()
                        .map(|(h, p)| (2.0 * PI * step * (h + 1) as f64 * t + p).sin() / (h + 1) as f64)
                        .sum::<f64>()
            }
            None => 0.0,
        };
        let mut s = [0.0; 3];
        for (axis, out) in s.iter_mut().enumerate() {
            let n = if profile.noise_floor > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            *out = AXIS_SPLIT[axis] * v + motion * if axis == 2 { 1.0 } else { 0.5 } + n;
        }
        s[2] += profile.gravity;
        samples.push(s);
    }
    RawAccelTrace::new(timestamps, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_prep::Axis;

    fn tone(f: f64, seconds: f64) -> UniformSeries {
        let rate = 16000.0;
        let n = (seconds * rate) as usize;
        UniformSeries::new(rate, (0..n).map(|i| (2.0 * PI * f * i as f64 / rate).sin()).collect()).unwrap()
    }

    /// Amplitude of the sinusoid at `f` in uniformly sampled `x` by projection.
    fn amplitude(x: &[f64], rate: f64, f: f64) -> f64 {
        let (mut c, mut s) = (0.0, 0.0);
        for (i, v) in x.iter().enumerate() {
            let w = 2.0 * PI * f * i as f64 / rate;
            c += v * w.cos();
            s += v * w.sin();
        }
        2.0 * (c * c + s * s).sqrt() / x.len() as f64
    }

    #[test]
    fn silence_gives_gravity_only() {
        let audio = UniformSeries::new(16000.0, vec![0.0; 16000]).unwrap();
        let p = SensorProfile::preset(500.0).unwrap().quiet();
        let trace = simulate_trace(&audio, &p, &ScenePreset::default(), 1).unwrap();
        assert_eq!(trace.len(), 501);
        for s in trace.samples() {
            assert_eq!(s[0], 0.0);
            assert_eq!(s[1], 0.0);
            assert!((s[2] - 9.8).abs() < 1e-12);
        }
    }

    #[test]
    fn response_passes_low_and_blocks_alias() {
        let p = SensorProfile::preset(500.0).unwrap().quiet();
        let pass = simulate_trace(&tone(100.0, 2.0), &p, &ScenePreset::default(), 0).unwrap();
        let z: Vec<f64> = pass.axis_values(Axis::Z).iter().map(|v| v - 9.8).collect();
        let a100 = amplitude(&z, 500.0, 100.0);
        assert!(20.0 * a100.log10() > -3.0, "100 Hz at {a100}");
        let blocked = simulate_trace(&tone(400.0, 2.0), &p, &ScenePreset::default(), 0).unwrap();
        let z: Vec<f64> = blocked.axis_values(Axis::Z).iter().map(|v| v - 9.8).collect();
        // A 400 Hz line sampled at 500 Hz folds onto 100 Hz.
        let alias = amplitude(&z, 500.0, 100.0);
        assert!(20.0 * (alias / a100).log10() < -40.0);
    }

    #[test]
    fn deterministic_and_monotone() {
        let p = SensorProfile::preset(200.0).unwrap();
        let scene = ScenePreset { scene: Scene::Restaurant, volume: 0.5 };
        let a = simulate_trace(&tone(80.0, 1.0), &p, &scene, 7).unwrap();
        let b = simulate_trace(&tone(80.0, 1.0), &p, &scene, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.timestamps_ns().windows(2).all(|w| w[1] > w[0]));
        let c = simulate_trace(&tone(80.0, 1.0), &p, &scene, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn walking_energy_is_sub_20_hz() {
        let silence = UniformSeries::new(16000.0, vec![0.0; 16000 * 8]).unwrap();
        let p = SensorProfile::preset(500.0).unwrap().quiet();
        let scene = ScenePreset { scene: Scene::Walking, volume: 1.0 };
        let t = simulate_trace(&silence, &p, &scene, 3).unwrap();
        let z: Vec<f64> = t.axis_values(Axis::Z).iter().map(|v| v - 9.8).collect();
        let n = z.len();
        let mut buf: Vec<Complex64> = z.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let (mut low, mut total) = (0.0, 0.0);
        for (k, c) in buf.iter().enumerate().take(n / 2) {
            let f = k as f64 * 500.0 / n as f64;
            total += c.norm_sqr();
            if f < 20.0 {
                low += c.norm_sqr();
            }
        }
        assert!(low / total >= 0.95);
    }

    #[test]
    fn rejects_bad_input() {
        let p = SensorProfile::preset(500.0).unwrap();
        let tiny = UniformSeries::new(16000.0, vec![0.0; 10]).unwrap();
        assert!(matches!(simulate_trace(&tiny, &p, &ScenePreset::default(), 0), Err(Error::Input(_))));
        assert!(SensorProfile::preset(300.0).is_err());
        let loud = ScenePreset { scene: Scene::None, volume: 1.5 };
        assert!(simulate_trace(&tone(100.0, 1.0), &p, &loud, 0).is_err());
    }
}
