//! Seeded synthetic speech: a source-filter toy with a small vocabulary.
//!
//! Words are strings of consonant-vowel syllables. Vowels are harmonic
//! spectra shaped by three formants; consonants are fricative noise,
//! plosive bursts or nasal murmurs. Each speaker has a base pitch.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_prep::UniformSeries;
use crate::vocoder::save_wav;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub files: usize,
    pub seconds_per_file: f64,
    pub speakers: usize,
    pub vocabulary: usize,
    pub rate_hz: u32,
    pub f0_min_hz: f64,
    pub f0_max_hz: f64,
    /// Transcripts are written per window of this length.
    pub segment_seconds: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            files: 4,
            seconds_per_file: 12.0,
            speakers: 4,
            vocabulary: 40,
            rate_hz: 16_000,
            f0_min_hz: 70.0,
            f0_max_hz: 220.0,
            segment_seconds: 4.0,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.files > 0
            && self.speakers > 0
            && self.vocabulary > 0
            && self.rate_hz >= 8000
            && self.segment_seconds > 0.0
            && self.seconds_per_file >= self.segment_seconds
            && self.f0_min_hz > 0.0
            && self.f0_max_hz >= self.f0_min_hz;
        if !ok {
            return Err(Error::Parameter(format!("invalid corpus config {self:?}")));
        }
        Ok(())
    }
}

/// One synthetic recording and its per-window transcripts.
#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub name: String,
    pub speaker: usize,
    pub f0_hz: f64,
    pub audio: UniformSeries,
    pub transcripts: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phone {
    Vowel([f64; 3]),
    Fricative(f64),
    Plosive(f64),
    Nasal(f64),
}

const VOWELS: [(&str, [f64; 3]); 5] = [
    ("a", [730.0, 1090.0, 2440.0]),
    ("i", [270.0, 2290.0, 3010.0]),
    ("u", [300.0, 870.0, 2240.0]),
    ("e", [530.0, 1840.0, 2480.0]),
    ("o", [570.0, 840.0, 2410.0]),
];

const CONSONANTS: [(&str, Phone); 8] = [
    ("s", Phone::Fricative(5000.0)),
    ("f", Phone::Fricative(3000.0)),
    ("sh", Phone::Fricative(2500.0)),
    ("p", Phone::Plosive(1000.0)),
    ("t", Phone::Plosive(3500.0)),
    ("k", Phone::Plosive(2000.0)),
    ("m", Phone::Nasal(250.0)),
    ("n", Phone::Nasal(300.0)),
];

#[derive(Debug, Clone)]
struct Word {
    text: String,
    phones: Vec<(Phone, f64)>,
}

fn make_vocabulary(n: usize, rng: &mut ChaCha8Rng) -> Vec<Word> {
    let mut words: Vec<Word> = Vec::with_capacity(n);
    while words.len() < n {
        let syllables = rng.random_range(1..=3);
        let mut text = String::new();
        let mut phones = Vec::new();
        for _ in 0..syllables {
            let (c, cp) = *CONSONANTS.choose(rng).expect("non-empty");
            let (v, vf) = *VOWELS.choose(rng).expect("non-empty");
            let c_len = match cp {
                Phone::Plosive(_) => 0.03,
                _ => rng.random_range(0.06..0.11),
            };
            text.push_str(c);
            text.push_str(v);
            phones.push((cp, c_len));
            phones.push((Phone::Vowel(vf), rng.random_range(0.12..0.22)));
        }
        if !words.iter().any(|w| w.text == text) {
            words.push(Word { text, phones });
        }
    }
    words
}

/// Spectral envelope of a vowel at `f`.
fn formant_gain(formants: &[f64; 3], f: f64) -> f64 {
    const BW: [f64; 3] = [90.0, 110.0, 170.0];
    const AMP: [f64; 3] = [1.0, 0.6, 0.3];
    let peaks: f64 = (0..3)
        .map(|i| AMP[i] / (1.0 + ((f - formants[i]) / BW[i]).powi(2)))
        .sum();
    // Glottal tilt keeps the low harmonics present between formants.
    peaks + 0.25 / (1.0 + f / 400.0)
}

/// Timeline entry: phone active over `[start, end)` in seconds.
#[derive(Debug, Clone, Copy)]
struct Placed {
    phone: Phone,
    start: f64,
    end: f64,
}

const BLOCK: usize = 64;

fn render(timeline: &[Placed], f0: f64, n: usize, rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let max_h = ((5000.0 / (f0 * 0.9)).floor() as usize).max(1);
    let mut out = vec![0.0; n];
    let mut gains = vec![0.0; max_h];
    let mut phase = 0.0f64;
    let mut lp = 0.0f64;
    let mut hp_prev = 0.0f64;
    let mut cursor = 0;
    for block_start in (0..n).step_by(BLOCK) {
        let t = block_start as f64 / rate;
        while cursor < timeline.len() && timeline[cursor].end <= t {
            cursor += 1;
        }
        let active = timeline
            .get(cursor)
            .filter(|p| p.start <= t)
            .map(|p| (p.phone, ((t - p.start) / (p.end - p.start)).clamp(0.0, 1.0)));
        // Raised-cosine envelope over each phone.
        let env = |pos: f64| (PI * pos).sin().powf(0.5);
        let pitch = f0 * (1.0 + 0.04 * (2.0 * PI * 0.7 * t).sin());
        let mut voiced = 0.0;
        let mut noise_amp = 0.0;
        let mut noise_tone = 0.0;
        gains.iter_mut().for_each(|g| *g = 0.0);
        if let Some((phone, pos)) = active {
            match phone {
                Phone::Vowel(fm) => {
                    voiced = env(pos);
                    for (k, g) in gains.iter_mut().enumerate() {
                        let f = pitch * (k + 1) as f64;
                        if f < 5000.0 {
                            *g = formant_gain(&fm, f);
                        }
                    }
                }
                Phone::Nasal(f1) => {
                    voiced = 0.5 * env(pos);
                    for (k, g) in gains.iter_mut().enumerate() {
                        let f = pitch * (k + 1) as f64;
                        if f < 5000.0 {
                            *g = 1.0 / (1.0 + ((f - f1) / 120.0).powi(2)) + 0.1 / (1.0 + f / 300.0);
                        }
                    }
                }
                Phone::Fricative(center) => {
                    noise_amp = 0.15 * env(pos);
                    noise_tone = center;
                }
                Phone::Plosive(center) => {
                    noise_amp = 0.4 * (1.0 - pos);
                    noise_tone = center;
                }
            }
        }
        // One-pole smoothing coefficient setting the noise color.
        let alpha = if noise_tone > 0.0 { (-2.0 * PI * noise_tone / rate).exp() } else { 0.0 };
        for i in block_start..(block_start + BLOCK).min(n) {
            phase = (phase + 2.0 * PI * pitch / rate) % (2.0 * PI);
            let mut s = 0.0;
            if voiced > 0.0 {
                // sin(kθ) by the Chebyshev recurrence.
                let c2 = 2.0 * phase.cos();
                let (mut prev, mut cur) = (0.0, phase.sin());
                for g in gains.iter() {
                    s += g * cur;
                    let next = c2 * cur - prev;
                    prev = cur;
                    cur = next;
                }
                s *= 0.3 * voiced;
            }
            let w: f64 = StandardNormal.sample(rng);
            if noise_amp > 0.0 {
                lp = alpha * lp + (1.0 - alpha) * w;
                let hp = lp - hp_prev;
                hp_prev = lp;
                s += noise_amp * (w - lp + 0.5 * hp);
            }
            out[i] = s + 1e-4 * w;
        }
    }
    out
}

/// Deterministic corpus for `cfg.seed`.
pub fn synthesize_corpus(cfg: &CorpusConfig) -> Result<Vec<Utterance>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = make_vocabulary(cfg.vocabulary, &mut rng);
    let speakers: Vec<f64> = (0..cfg.speakers)
        .map(|s| {
            if cfg.speakers == 1 {
                cfg.f0_min_hz
            } else {
                cfg.f0_min_hz + (cfg.f0_max_hz - cfg.f0_min_hz) * s as f64 / (cfg.speakers - 1) as f64
            }
        })
        .collect();
    let rate = cfg.rate_hz as f64;
    let n = (cfg.seconds_per_file * rate).round() as usize;
    let windows = (cfg.seconds_per_file / cfg.segment_seconds + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(cfg.files);
    for file in 0..cfg.files {
        let speaker = file % cfg.speakers;
        let f0 = speakers[speaker];
        let mut timeline = Vec::new();
        let mut transcripts = Vec::with_capacity(windows);
        for w in 0..windows {
            let mut t = w as f64 * cfg.segment_seconds + rng.random_range(0.05..0.25);
            let end = (w + 1) as f64 * cfg.segment_seconds - 0.1;
            let mut words = Vec::new();
            loop {
                let word = vocab.choose(&mut rng).expect("non-empty vocabulary");
                let len: f64 = word.phones.iter().map(|p| p.1).sum();
                if t + len > end {
                    break;
                }
                for &(phone, d) in &word.phones {
                    timeline.push(Placed { phone, start: t, end: t + d });
                    t += d;
                }
                t += rng.random_range(0.08..0.2);
                words.push(word.text.clone());
            }
            transcripts.push(words.join(" "));
        }
        let mut audio = render(&timeline, f0, n, rate, &mut rng);
        let peak = audio.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if peak > 0.0 {
            audio.iter_mut().for_each(|v| *v *= 0.5 / peak);
        }
        out.push(Utterance {
            name: format!("utt{file:04}_spk{speaker:02}"),
            speaker,
            f0_hz: f0,
            audio: UniformSeries::new(rate, audio)?,
            transcripts,
        });
    }
    Ok(out)
}

/// Writes `<name>.wav` and a `<name>.txt` sidecar with one transcript line
/// per window.
pub fn write_corpus(dir: &Path, utterances: &[Utterance]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for u in utterances {
        save_wav(&dir.join(format!("{}.wav", u.name)), &u.audio)?;
        let mut text = u.transcripts.join("\n");
        text.push('\n');
        std::fs::write(dir.join(format!("{}.txt", u.name)), text)?;
    }
    Ok(())
}
