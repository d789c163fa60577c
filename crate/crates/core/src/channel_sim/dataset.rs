//! Paired (accelerometer, audio) corpora and their JSON manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{simulate_trace, ScenePreset, SensorProfile};
use crate::error::{Error, Result};
use crate::metrics::tokenize;
use crate::signal_prep::{prepare_trace, segment, PrepConfig, RawAccelTrace, UniformSeries};
use crate::spectral::{Matrix, NormStats, SpectralConfig};
use crate::vocoder::load_wav;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetStats {
    pub condition: NormStats,
    pub target: NormStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentEntry {
    pub segment_id: String,
    /// Relative to the manifest directory.
    pub accel_csv: PathBuf,
    pub audio_wav: PathBuf,
    pub offset_s: f64,
    pub duration_s: f64,
    pub condition_stats: NormStats,
    pub target_stats: NormStats,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WordOverlap {
    pub train_words: usize,
    pub test_words: usize,
    pub overlapping_words: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairedManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub profile: SensorProfile,
    pub scene: ScenePreset,
    pub split_ratio: f64,
    pub spectral: SpectralConfig,
    pub prep: PrepConfig,
    /// Normalization range over the training split.
    pub stats: DatasetStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_overlap: Option<WordOverlap>,
    pub segments: Vec<SegmentEntry>,
}

/// Raw signals of one manifest segment.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentSignals {
    /// Conditioned accelerometer samples at the prep rate.
    pub accel: Vec<f64>,
    pub audio: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetOptions {
    pub profile: SensorProfile,
    pub scene: ScenePreset,
    pub seed: u64,
    pub split_ratio: f64,
    pub spectral: SpectralConfig,
    pub prep: PrepConfig,
}

impl DatasetOptions {
    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        self.scene.validate()?;
        if !(0.0..=1.0).contains(&self.split_ratio) {
            return Err(Error::Parameter(format!(
                "split ratio {} outside [0, 1]",
                self.split_ratio
            )));
        }
        check_geometry(&self.spectral, &self.prep)
    }
}

fn check_geometry(spectral: &SpectralConfig, prep: &PrepConfig) -> Result<()> {
    if spectral.accel_rate_hz != prep.rate_hz || spectral.segment_seconds != prep.segment_seconds {
        return Err(Error::Parameter(format!(
            "spectral geometry ({} Hz, {} s) disagrees with prep ({} Hz, {} s)",
            spectral.accel_rate_hz, spectral.segment_seconds, prep.rate_hz, prep.segment_seconds
        )));
    }
    Ok(())
}

impl PairedManifest {
    pub fn write<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read<R: Read>(r: R) -> Result<Self> {
        let m: PairedManifest = serde_json::from_reader(r)?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "manifest schema {} (expected {MANIFEST_SCHEMA_VERSION})",
                m.schema_version
            )));
        }
        check_geometry(&m.spectral, &m.prep)?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write(&mut buf)?;
        std::fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read(std::io::BufReader::new(std::fs::File::open(path)?))
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SegmentEntry> {
        self.segments.iter().filter(move |s| s.split == split)
    }

    /// Signals for every segment, in manifest order. Each source file is
    /// read and conditioned once.
    pub fn load_signals(&self, root: &Path) -> Result<Vec<SegmentSignals>> {
        let mut files: BTreeMap<(&Path, &Path), (Vec<Vec<f64>>, UniformSeries)> = BTreeMap::new();
        for s in &self.segments {
            let key = (s.accel_csv.as_path(), s.audio_wav.as_path());
            if files.contains_key(&key) {
                continue;
            }
            let trace = RawAccelTrace::load_csv(&root.join(&s.accel_csv))?;
            let accel = prepare_trace(&trace, &self.prep)?.into_iter().map(|g| g.values).collect();
            let audio = load_wav(&root.join(&s.audio_wav))?;
            files.insert(key, (accel, audio));
        }
        self.segments
            .iter()
            .map(|s| {
                let (accel, audio) = &files[&(s.accel_csv.as_path(), s.audio_wav.as_path())];
                let k = (s.offset_s / self.prep.segment_seconds).round() as usize;
                let a = accel.get(k).ok_or_else(|| {
                    Error::Input(format!("{}: trace has no segment at {} s", s.segment_id, s.offset_s))
                })?;
                let n = self.spectral.audio_segment_len();
                let start = k * n;
                let audio = audio.values().get(start..start + n).ok_or_else(|| {
                    Error::Input(format!("{}: audio ends before {} s", s.segment_id, s.offset_s))
                })?;
                Ok(SegmentSignals { accel: a.clone(), audio: audio.to_vec() })
            })
            .collect()
    }

    /// Compressed (condition, target) feature matrices for every segment.
    pub fn load_features(&self, root: &Path) -> Result<Vec<(Matrix, Matrix)>> {
        let fb = self.spectral.filterbank()?;
        let signals = self.load_signals(root)?;
        signals
            .par_iter()
            .map(|s| {
                Ok((
                    self.spectral.accel_features(&s.accel)?,
                    self.spectral.audio_features(&s.audio, &fb)?,
                ))
            })
            .collect()
    }
}

fn stats_of(m: &Matrix) -> NormStats {
    NormStats::from_matrices([m]).expect("feature matrices are non-empty")
}

struct FileOutput {
    stem: String,
    trace: RawAccelTrace,
    features: Vec<(Matrix, Matrix)>,
    transcripts: Vec<String>,
}

fn process_file(path: &Path, opts: &DatasetOptions, seed: u64) -> Result<FileOutput> {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::Input(format!("{}: unusable file name", path.display())))?
        .to_string();
    let audio = load_wav(path)?;
    if audio.rate_hz() != opts.spectral.audio_rate_hz as f64 {
        return Err(Error::Input(format!(
            "{}: sampled at {} Hz, expected {} Hz",
            path.display(),
            audio.rate_hz(),
            opts.spectral.audio_rate_hz
        )));
    }
    let trace = simulate_trace(&audio, &opts.profile, &opts.scene, seed)?;
    let accel = prepare_trace(&trace, &opts.prep)?;
    let speech = segment(&audio, opts.prep.segment_seconds)?;
    let fb = opts.spectral.filterbank()?;
    let features = accel
        .iter()
        .zip(&speech)
        .map(|(a, s)| {
            Ok((
                opts.spectral.accel_features(&a.values)?,
                opts.spectral.audio_features(&s.values, &fb)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let sidecar = path.with_extension("txt");
    let transcripts = match std::fs::read_to_string(&sidecar) {
        Ok(text) => text.lines().map(|l| l.trim().to_string()).collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    Ok(FileOutput { stem, trace, features, transcripts })
}

/// Simulates a trace for every WAV in `audio_dir` and writes the traces,
/// copies of the audio and `manifest.json` under `out_dir`.
///
/// A `<name>.txt` next to `<name>.wav` supplies one transcript line per
/// segment.
pub fn make_dataset(audio_dir: &Path, out_dir: &Path, opts: &DatasetOptions) -> Result<PairedManifest> {
    opts.validate()?;
    let mut wavs: Vec<PathBuf> = std::fs::read_dir(audio_dir)
        .map_err(|e| Error::Input(format!("{}: {e}", audio_dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    wavs.sort();
    if wavs.is_empty() {
        return Err(Error::Input(format!("no input audio in {}", audio_dir.display())));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let seeds: Vec<u64> = wavs.iter().map(|_| rng.random()).collect();
    let outputs = wavs
        .par_iter()
        .zip(&seeds)
        .map(|(p, &seed)| process_file(p, opts, seed))
        .collect::<Result<Vec<_>>>()?;

    let traces_dir = out_dir.join("traces");
    let audio_out = out_dir.join("audio");
    std::fs::create_dir_all(&traces_dir)?;
    std::fs::create_dir_all(&audio_out)?;

    let mut segments = Vec::new();
    for (out, src) in outputs.into_iter().zip(&wavs) {
        let csv = PathBuf::from("traces").join(format!("{}.csv", out.stem));
        let wav = PathBuf::from("audio").join(format!("{}.wav", out.stem));
        out.trace.save_csv(&out_dir.join(&csv))?;
        std::fs::copy(src, out_dir.join(&wav))?;
        for (k, (cond, target)) in out.features.into_iter().enumerate() {
            segments.push(SegmentEntry {
                segment_id: format!("{}_{k:03}", out.stem),
                accel_csv: csv.clone(),
                audio_wav: wav.clone(),
                offset_s: k as f64 * opts.prep.segment_seconds,
                duration_s: opts.prep.segment_seconds,
                condition_stats: stats_of(&cond),
                target_stats: stats_of(&target),
                split: Split::Test,
                transcript: out.transcripts.get(k).filter(|t| !t.is_empty()).cloned(),
            });
        }
    }
    if segments.is_empty() {
        return Err(Error::Input(format!(
            "no input audio in {} is at least {} s long",
            audio_dir.display(),
            opts.prep.segment_seconds
        )));
    }

    let mut order: Vec<usize> = (0..segments.len()).collect();
    order.shuffle(&mut rng);
    let n_train = (opts.split_ratio * segments.len() as f64).round() as usize;
    for &i in &order[..n_train] {
        segments[i].split = Split::Train;
    }
    // Fall back to every segment when the training split is empty.
    let pool: Vec<usize> = if n_train > 0 { order[..n_train].to_vec() } else { order.clone() };
    let stats = DatasetStats {
        condition: pool.iter().map(|&i| segments[i].condition_stats).reduce(NormStats::merge).expect("non-empty"),
        target: pool.iter().map(|&i| segments[i].target_stats).reduce(NormStats::merge).expect("non-empty"),
    };

    let manifest = PairedManifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        seed: opts.seed,
        profile: opts.profile,
        scene: opts.scene,
        split_ratio: opts.split_ratio,
        spectral: opts.spectral,
        prep: opts.prep,
        stats,
        word_overlap: word_overlap(&segments),
        segments,
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

fn word_overlap(segments: &[SegmentEntry]) -> Option<WordOverlap> {
    if segments.iter().all(|s| s.transcript.is_none()) {
        return None;
    }
    let vocab = |split: Split| -> BTreeSet<String> {
        segments
            .iter()
            .filter(|s| s.split == split)
            .filter_map(|s| s.transcript.as_deref())
            .flat_map(tokenize)
            .collect()
    };
    let (train, test) = (vocab(Split::Train), vocab(Split::Test));
    Some(WordOverlap {
        train_words: train.len(),
        test_words: test.len(),
        overlapping_words: train.intersection(&test).count(),
    })
}
