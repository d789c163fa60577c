//! End-to-end runs over files: simulate, prepare, train, reconstruct,
//! evaluate and export. Each command writes its resolved [`RunConfig`]
//! next to its outputs and skips work whose inputs and configuration are
//! unchanged unless forced.

mod config;
mod model;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    parse_override, ModelConfig, RunConfig, SimulateConfig, VocoderConfig, RUN_CONFIG_FILE,
};
pub use model::{concat, upsample_cols, Model, ModelCard, SegmentReconstruction, Vocoder, MODEL_FILE};

use crate::cgan::{
    identity_baseline, train_with_progress, Checkpoint, EpochStats, TrainState, TrainingData,
};
use crate::channel_sim::{
    make_dataset, synthesize_corpus, write_corpus, CorpusConfig, DatasetStats, PairedManifest,
    Split, MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::metrics::{mcd, mfcc, save_report, tokenize, wer, EvalRow, WerBreakdown};
use crate::signal_prep::{prepare_trace, segment, PrepConfig, RawAccelTrace, UniformSeries};
use crate::spectral::{
    read_raw, Compression, NormStats, SpectralConfig, SpectroImage,
};
use crate::vocoder::{load_wav, save_wav};

pub const THREADS_ENV: &str = "ACCEAR_THREADS";
pub const PREPARED_FILE: &str = "prepared.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.accg";
pub const LOSSES_FILE: &str = "losses.csv";
pub const LOSSES_HEADER: &str = "epoch,phase,d_loss,g_loss,l1,g_adv";
pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.json";

/// Sizes the global worker pool from `ACCEAR_THREADS` when set.
pub fn init_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV}={raw:?} is not a positive integer")))?;
    // A second initialization in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Hex digest over a command name, its configuration and its input files.
fn fingerprint(command: &str, cfg: &RunConfig, extra: &str, inputs: &[PathBuf]) -> Result<String> {
    let mut h = Sha256::new();
    h.update(command.as_bytes());
    h.update(cfg.to_toml().as_bytes());
    h.update(extra.as_bytes());
    for p in inputs {
        h.update(p.to_string_lossy().as_bytes());
        h.update(std::fs::read(p)?);
    }
    Ok(h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

fn stamp_path(dir: &Path, command: &str) -> PathBuf {
    dir.join(format!(".accear-{command}.stamp"))
}

fn is_fresh(dir: &Path, command: &str, print: &str, outputs: &[PathBuf]) -> bool {
    outputs.iter().all(|p| p.exists())
        && std::fs::read_to_string(stamp_path(dir, command)).is_ok_and(|s| s.trim() == print)
}

fn write_stamp(dir: &Path, command: &str, print: &str) -> Result<()> {
    std::fs::write(stamp_path(dir, command), format!("{print}\n"))?;
    Ok(())
}

/// Result of a command: its main output and whether work was skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub path: PathBuf,
    pub skipped: bool,
}

/// Writes a synthetic speech corpus (WAVs plus transcript sidecars).
pub fn cmd_synth_corpus(out_dir: &Path, corpus: &CorpusConfig) -> Result<()> {
    write_corpus(out_dir, &synthesize_corpus(corpus)?)
}

fn wav_inputs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::Input(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .is_some_and(|x| x.eq_ignore_ascii_case("wav") || x.eq_ignore_ascii_case("txt"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Simulated accelerometer traces and the paired manifest for a WAV folder.
pub fn cmd_simulate(audio_dir: &Path, out_dir: &Path, cfg: &RunConfig, force: bool) -> Result<Outcome> {
    cfg.validate()?;
    let inputs = wav_inputs(audio_dir)?;
    if !inputs.iter().any(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav"))) {
        return Err(Error::Input(format!("no input audio in {}", audio_dir.display())));
    }
    let manifest = out_dir.join(MANIFEST_FILE);
    let print = fingerprint("simulate", cfg, "", &inputs)?;
    if !force && is_fresh(out_dir, "simulate", &print, &[manifest.clone()]) {
        return Ok(Outcome { path: manifest, skipped: true });
    }
    std::fs::create_dir_all(out_dir)?;
    make_dataset(audio_dir, out_dir, &cfg.dataset_options()?)?;
    cfg.save(out_dir)?;
    write_stamp(out_dir, "simulate", &print)?;
    Ok(Outcome { path: manifest, skipped: false })
}

/// Image pairs written by `prepare`, with the scaling that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreparedIndex {
    pub spectral: SpectralConfig,
    pub prep: PrepConfig,
    pub stats: DatasetStats,
    pub entries: Vec<PreparedEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreparedEntry {
    pub segment_id: String,
    pub split: Split,
    pub condition: PathBuf,
    pub target: PathBuf,
}

impl PreparedIndex {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(PREPARED_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn image(&self, dir: &Path, rel: &Path, target: bool) -> Result<SpectroImage> {
        let file = std::fs::File::open(dir.join(rel))?;
        let (rows, cols, data) = read_raw(std::io::BufReader::new(file))?;
        let (compression, stats, axis) = if target {
            (Compression::Log1p, self.stats.target, self.spectral.mel_axis())
        } else {
            (Compression::Sqrt, self.stats.condition, self.spectral.accel_axis())
        };
        SpectroImage::new(rows, cols, data, compression, stats, axis, self.spectral.seconds_per_col())
    }

    /// (condition, target) images of one split.
    pub fn load_pairs(&self, dir: &Path, split: Split) -> Result<Vec<(SpectroImage, SpectroImage)>> {
        self.entries
            .iter()
            .filter(|e| e.split == split)
            .map(|e| Ok((self.image(dir, &e.condition, false)?, self.image(dir, &e.target, true)?)))
            .collect()
    }
}

/// Adopts the geometry recorded in a manifest.
fn with_manifest_geometry(cfg: &RunConfig, m: &PairedManifest) -> RunConfig {
    RunConfig {
        spectral: m.spectral,
        prep: m.prep,
        ..*cfg
    }
}

/// Normalized condition/target images for every manifest segment.
pub fn cmd_prepare(manifest_path: &Path, out_dir: &Path, cfg: &RunConfig, force: bool) -> Result<Outcome> {
    let manifest = PairedManifest::load(manifest_path)?;
    let cfg = with_manifest_geometry(cfg, &manifest);
    cfg.validate()?;
    let index_path = out_dir.join(PREPARED_FILE);
    let print = fingerprint("prepare", &cfg, "", &[manifest_path.to_path_buf()])?;
    if !force && is_fresh(out_dir, "prepare", &print, &[index_path.clone()]) {
        return Ok(Outcome { path: index_path, skipped: true });
    }
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    let features = manifest.load_features(root)?;
    let images = out_dir.join("images");
    std::fs::create_dir_all(&images)?;
    let s = &manifest.spectral;
    let entries = manifest
        .segments
        .par_iter()
        .zip(&features)
        .map(|(seg, (c, t))| {
            let condition = PathBuf::from("images").join(format!("{}.cond.aspc", seg.segment_id));
            let target = PathBuf::from("images").join(format!("{}.target.aspc", seg.segment_id));
            s.condition_image(c, manifest.stats.condition)?.save_raw(&out_dir.join(&condition))?;
            s.target_image(t, manifest.stats.target)?.save_raw(&out_dir.join(&target))?;
            Ok(PreparedEntry {
                segment_id: seg.segment_id.clone(),
                split: seg.split,
                condition,
                target,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let index = PreparedIndex {
        spectral: manifest.spectral,
        prep: manifest.prep,
        stats: manifest.stats,
        entries,
    };
    let mut text = serde_json::to_string_pretty(&index)?;
    text.push('\n');
    std::fs::write(&index_path, text)?;
    cfg.save(out_dir)?;
    write_stamp(out_dir, "prepare", &print)?;
    Ok(Outcome { path: index_path, skipped: false })
}

fn loss_row(s: &EpochStats) -> String {
    let l = &s.losses;
    format!("{},{},{},{},{},{}", s.epoch, s.phase, l.d_loss, l.g_loss, l.l1, l.g_adv)
}

/// Trains on the training split of a prepared directory.
///
/// Writes `checkpoint.accg` (latest), `checkpoints/epoch_NNNN.accg` every
/// `checkpoint_every` epochs, `losses.csv` and `model.json`. With `resume`,
/// training continues from that checkpoint's epoch and earlier loss rows
/// are kept.
pub fn cmd_train(
    prepared_dir: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
    resume: Option<&Path>,
    force: bool,
) -> Result<Outcome> {
    let index = PreparedIndex::load(prepared_dir)?;
    let cfg = RunConfig {
        spectral: index.spectral,
        prep: index.prep,
        ..*cfg
    };
    cfg.validate()?;
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    let mut inputs = vec![prepared_dir.join(PREPARED_FILE)];
    inputs.extend(resume.map(Path::to_path_buf));
    let print = fingerprint("train", &cfg, "", &inputs)?;
    if !force && is_fresh(out_dir, "train", &print, &[checkpoint.clone(), out_dir.join(LOSSES_FILE)]) {
        return Ok(Outcome { path: checkpoint, skipped: true });
    }
    let pairs = index.load_pairs(prepared_dir, Split::Train)?;
    if pairs.is_empty() {
        return Err(Error::Input(format!("{}: training split is empty", prepared_dir.display())));
    }
    let data = TrainingData::from_images(&pairs)?;
    let net = cfg.net();
    let state = match resume {
        Some(p) => TrainState::from_checkpoint(&Checkpoint::load(p, &net)?, &cfg.train)?,
        None => TrainState::new(net, &cfg.train)?,
    };
    std::fs::create_dir_all(out_dir.join("checkpoints"))?;
    ModelCard {
        net,
        spectral: index.spectral,
        prep: index.prep,
        stats: index.stats,
        noise_seed: cfg.train.seed,
    }
    .save(out_dir)?;

    let mut rows: Vec<String> = Vec::new();
    // Earlier epochs come from the run that wrote the checkpoint: its own
    // directory, or one up for `checkpoints/epoch_NNNN.accg`.
    let history = resume
        .and_then(Path::parent)
        .into_iter()
        .flat_map(|d| [Some(d), d.parent()])
        .flatten()
        .chain([out_dir])
        .map(|d| d.join(LOSSES_FILE))
        .find(|p| p.exists());
    if let (true, Some(history)) = (state.epoch > 0, history) {
        if let Ok(old) = std::fs::read_to_string(history) {
            rows.extend(
                old.lines()
                    .skip(1)
                    .filter(|l| l.split(',').next().and_then(|e| e.parse::<usize>().ok()).is_some_and(|e| e < state.epoch))
                    .map(str::to_string),
            );
        }
    }
    let write_losses = |rows: &[String]| -> Result<()> {
        let mut text = String::from(LOSSES_HEADER);
        text.push('\n');
        for r in rows {
            text.push_str(r);
            text.push('\n');
        }
        std::fs::write(out_dir.join(LOSSES_FILE), text)?;
        Ok(())
    };
    let every = cfg.train.checkpoint_every;
    let total = cfg.train.epochs;
    let state = train_with_progress(&data, state, &cfg.train, |stats, state| {
        rows.push(loss_row(stats));
        write_losses(&rows)?;
        if (every > 0 && state.epoch % every == 0) || state.epoch == total {
            let ckpt = state.to_checkpoint();
            if every > 0 && state.epoch % every == 0 {
                ckpt.save(&out_dir.join("checkpoints").join(format!("epoch_{:04}.accg", state.epoch)))?;
            }
            ckpt.save(&checkpoint)?;
        }
        Ok(())
    })?;
    // Resuming a finished run trains nothing but still leaves a checkpoint.
    if !checkpoint.exists() {
        state.to_checkpoint().save(&checkpoint)?;
    }
    write_losses(&rows)?;
    cfg.save(out_dir)?;
    write_stamp(out_dir, "train", &print)?;
    Ok(Outcome { path: checkpoint, skipped: false })
}

/// Audio reconstructed from one accelerometer trace.
///
/// With `export_dir`, a condition and generated PNG is written per segment,
/// plus a target PNG when `reference_wav` is given.
pub fn cmd_reconstruct(
    checkpoint: &Path,
    accel_csv: &Path,
    out_wav: &Path,
    cfg: &RunConfig,
    export_dir: Option<&Path>,
    reference_wav: Option<&Path>,
    force: bool,
) -> Result<Outcome> {
    let model = Model::load(checkpoint)?;
    let cfg = RunConfig {
        spectral: model.card.spectral,
        prep: model.card.prep,
        ..*cfg
    };
    cfg.validate()?;
    let out_dir = out_wav.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut inputs = vec![checkpoint.to_path_buf(), accel_csv.to_path_buf()];
    inputs.extend(reference_wav.map(Path::to_path_buf));
    let tag = format!("reconstruct-{}", out_wav.file_name().and_then(|s| s.to_str()).unwrap_or("out"));
    let extra = format!("{:?}", export_dir);
    let print = fingerprint(&tag, &cfg, &extra, &inputs)?;
    if !force && is_fresh(out_dir, &tag, &print, &[out_wav.to_path_buf()]) {
        return Ok(Outcome { path: out_wav.to_path_buf(), skipped: true });
    }
    let trace = RawAccelTrace::load_csv(accel_csv)?;
    let vocoder = Vocoder::new(model.card.spectral, &cfg.vocoder)?;
    let segments = model.reconstruct_trace(&trace, &vocoder)?;
    std::fs::create_dir_all(out_dir)?;
    let audio: Vec<UniformSeries> = segments.iter().map(|s| s.audio.clone()).collect();
    save_wav(out_wav, &concat(&audio)?)?;

    if let Some(dir) = export_dir {
        std::fs::create_dir_all(dir)?;
        let stem = out_wav.file_stem().and_then(|s| s.to_str()).unwrap_or("segment");
        let targets = match reference_wav {
            Some(p) => {
                let reference = load_wav(p)?;
                let fb = vocoder.filterbank();
                segment(&reference, model.card.prep.segment_seconds)?
                    .iter()
                    .map(|s| model.target_image(&s.values, fb))
                    .collect::<Result<Vec<_>>>()?
            }
            None => Vec::new(),
        };
        for (k, s) in segments.iter().enumerate() {
            s.condition.save_png(&dir.join(format!("{stem}_{k:03}_condition.png")))?;
            s.generated.save_png(&dir.join(format!("{stem}_{k:03}_generated.png")))?;
            if let Some(t) = targets.get(k) {
                t.save_png(&dir.join(format!("{stem}_{k:03}_target.png")))?;
            }
        }
    }
    cfg.save(out_dir)?;
    write_stamp(out_dir, &tag, &print)?;
    Ok(Outcome { path: out_wav.to_path_buf(), skipped: false })
}

/// Where `evaluate` takes the audio to score against the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalSource {
    /// Reconstruct each segment with a trained checkpoint.
    Checkpoint(PathBuf),
    /// `<dir>/<segment_id>.wav` per segment.
    WavDir(PathBuf),
    /// The condition image stretched to the target grid and vocoded.
    Baseline,
    /// The ground truth itself.
    GroundTruth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitSelect {
    Train,
    Test,
    All,
}

impl SplitSelect {
    fn accepts(self, s: Split) -> bool {
        match self {
            SplitSelect::All => true,
            SplitSelect::Train => s == Split::Train,
            SplitSelect::Test => s == Split::Test,
        }
    }
}

impl std::str::FromStr for SplitSelect {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitSelect::Train),
            "test" => Ok(SplitSelect::Test),
            "all" => Ok(SplitSelect::All),
            other => Err(Error::Parameter(format!("unknown split `{other}`"))),
        }
    }
}

/// Aggregates written to `summary.json` beside the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub segments: usize,
    pub mean_mcd: f64,
    pub comprehensible_fraction: f64,
    /// Mean L1 between the scored and ground-truth mel images, for sources
    /// that produce an image.
    pub mean_image_l1: Option<f64>,
    pub mean_wer: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub rows: Vec<EvalRow>,
    pub image_l1: Vec<Option<f64>>,
    pub summary: EvalSummary,
}

/// `segment_id<TAB>reference<TAB>hypothesis` lines; blank lines and lines
/// starting with `#` are skipped.
pub fn load_transcripts(path: &Path) -> Result<HashMap<String, (String, String)>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(reference), hyp) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                msg: "expected segment_id<TAB>reference<TAB>hypothesis".into(),
            });
        };
        out.insert(id.to_string(), (reference.to_string(), hyp.unwrap_or("").to_string()));
    }
    Ok(out)
}

/// Scores one split of a manifest, in memory.
pub fn evaluate_manifest(
    manifest: &PairedManifest,
    root: &Path,
    source: &EvalSource,
    split: SplitSelect,
    transcripts: Option<&HashMap<String, (String, String)>>,
    cfg: &RunConfig,
) -> Result<Evaluation> {
    let model = match source {
        EvalSource::Checkpoint(p) => Some(Model::load(p)?),
        _ => None,
    };
    let card = match &model {
        Some(m) => m.card,
        None => ModelCard {
            net: cfg.net(),
            spectral: manifest.spectral,
            prep: manifest.prep,
            stats: manifest.stats,
            noise_seed: cfg.train.seed,
        },
    };
    let vocoder = Vocoder::new(manifest.spectral, &cfg.vocoder)?;
    let signals = manifest.load_signals(root)?;
    let rate = manifest.spectral.audio_rate_hz as f64;
    let picked: Vec<usize> = (0..manifest.segments.len())
        .filter(|&i| split.accepts(manifest.segments[i].split))
        .collect();
    if picked.is_empty() {
        return Err(Error::Input("no segments in the selected split".into()));
    }
    let scored = picked
        .par_iter()
        .map(|&i| {
            let seg = &manifest.segments[i];
            let sig = &signals[i];
            let truth = UniformSeries::new(rate, sig.audio.clone())?;
            let s = &card.spectral;
            let target = || s.target_image(&s.audio_features(&sig.audio, vocoder.filterbank())?, card.stats.target);
            let condition = || s.condition_image(&s.accel_features(&sig.accel)?, card.stats.condition);
            let (hyp, image) = match source {
                EvalSource::GroundTruth => (truth.clone(), None),
                EvalSource::WavDir(dir) => (load_wav(&dir.join(format!("{}.wav", seg.segment_id)))?, None),
                EvalSource::Baseline => {
                    let t = target()?;
                    let img = identity_baseline(&condition()?, &t)?;
                    (vocoder.synthesize(&img)?, Some(img.l1_distance(&t)?))
                }
                EvalSource::Checkpoint(_) => {
                    let m = model.as_ref().expect("model loaded");
                    let k = (seg.offset_s / card.prep.segment_seconds).round() as usize;
                    let img = m.generate(&condition()?, k)?;
                    (vocoder.synthesize(&img)?, Some(img.l1_distance(&target()?)?))
                }
            };
            let n = truth.len().min(hyp.len());
            let a = UniformSeries::new(rate, truth.values()[..n].to_vec())?;
            let b = UniformSeries::new(hyp.rate_hz(), hyp.values()[..n].to_vec())?;
            let distortion = mcd(&mfcc(&a, &cfg.mfcc)?, &mfcc(&b, &cfg.mfcc)?)?;
            let wer_row = match transcripts.and_then(|t| t.get(&seg.segment_id)) {
                Some((reference, hypothesis)) => {
                    let r = tokenize(reference);
                    let h = if *source == EvalSource::GroundTruth { r.clone() } else { tokenize(hypothesis) };
                    Some(wer(&r, &h)?)
                }
                None => None,
            };
            Ok((EvalRow { segment_id: seg.segment_id.clone(), mcd: distortion, wer: wer_row }, image))
        })
        .collect::<Result<Vec<_>>>()?;
    let (rows, image_l1): (Vec<EvalRow>, Vec<Option<f64>>) = scored.into_iter().unzip();
    let n = rows.len() as f64;
    let l1s: Vec<f64> = image_l1.iter().flatten().copied().collect();
    let wers: Vec<&WerBreakdown> = rows.iter().filter_map(|r| r.wer.as_ref()).collect();
    let summary = EvalSummary {
        segments: rows.len(),
        mean_mcd: rows.iter().map(|r| r.mcd).sum::<f64>() / n,
        comprehensible_fraction: rows.iter().filter(|r| r.comprehensible()).count() as f64 / n,
        mean_image_l1: (!l1s.is_empty()).then(|| l1s.iter().sum::<f64>() / l1s.len() as f64),
        mean_wer: (!wers.is_empty()).then(|| wers.iter().map(|w| w.rate()).sum::<f64>() / wers.len() as f64),
    };
    Ok(Evaluation { rows, image_l1, summary })
}

/// Per-segment MCD (and WER with transcripts) against the manifest's
/// ground truth; writes `report.csv` and `summary.json` into `out_dir`.
pub fn cmd_evaluate(
    manifest_path: &Path,
    source: &EvalSource,
    split: SplitSelect,
    transcripts: Option<&Path>,
    out_dir: &Path,
    cfg: &RunConfig,
    force: bool,
) -> Result<Evaluation> {
    let manifest = PairedManifest::load(manifest_path)?;
    let cfg = with_manifest_geometry(cfg, &manifest);
    cfg.validate()?;
    let mut inputs = vec![manifest_path.to_path_buf()];
    inputs.extend(transcripts.map(Path::to_path_buf));
    if let EvalSource::Checkpoint(p) = source {
        inputs.push(p.clone());
    }
    let extra = format!("{source:?}{split:?}");
    let print = fingerprint("evaluate", &cfg, &extra, &inputs)?;
    let report = out_dir.join(REPORT_FILE);
    let summary_path = out_dir.join(SUMMARY_FILE);
    let table = transcripts.map(load_transcripts).transpose()?;
    let root = manifest_path.parent().unwrap_or(Path::new("."));
    if !force && is_fresh(out_dir, "evaluate", &print, &[report.clone(), summary_path.clone()]) {
        // Cheap to rebuild the in-memory view from the files on disk.
        let summary: EvalSummary = serde_json::from_str(&std::fs::read_to_string(&summary_path)?)?;
        return Ok(Evaluation { rows: Vec::new(), image_l1: Vec::new(), summary });
    }
    let eval = evaluate_manifest(&manifest, root, source, split, table.as_ref(), &cfg)?;
    std::fs::create_dir_all(out_dir)?;
    save_report(&report, &eval.rows)?;
    let mut text = serde_json::to_string_pretty(&eval.summary)?;
    text.push('\n');
    std::fs::write(&summary_path, text)?;
    cfg.save(out_dir)?;
    write_stamp(out_dir, "evaluate", &print)?;
    Ok(eval)
}

/// PNG spectrograms of a WAV (mel), an accelerometer CSV (linear) or a raw
/// `.aspc` image, one file per segment. Scaling comes from `manifest` when
/// given, otherwise from the input itself.
pub fn cmd_export_spectrogram(
    input: &Path,
    out_dir: &Path,
    manifest: Option<&Path>,
    cfg: &RunConfig,
) -> Result<Vec<PathBuf>> {
    let (cfg, stats) = match manifest {
        Some(p) => {
            let m = PairedManifest::load(p)?;
            (with_manifest_geometry(cfg, &m), Some(m.stats))
        }
        None => (*cfg, None),
    };
    cfg.validate()?;
    let s = cfg.spectral;
    let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("spectrogram").to_string();
    let ext = input.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let images: Vec<SpectroImage> = match ext.as_str() {
        "aspc" => {
            let (rows, cols, data) = read_raw(std::io::BufReader::new(std::fs::File::open(input)?))?;
            let unit = NormStats { min: 0.0, max: 1.0 };
            vec![SpectroImage::new(rows, cols, data, Compression::Sqrt, unit, s.accel_axis(), s.seconds_per_col())?]
        }
        "wav" => {
            let audio = load_wav(input)?;
            if audio.rate_hz() != s.audio_rate_hz as f64 {
                return Err(Error::Input(format!(
                    "{}: sampled at {} Hz, expected {}",
                    input.display(),
                    audio.rate_hz(),
                    s.audio_rate_hz
                )));
            }
            let fb = s.filterbank()?;
            let feats = segment(&audio, s.segment_seconds)?
                .iter()
                .map(|g| s.audio_features(&g.values, &fb))
                .collect::<Result<Vec<_>>>()?;
            let st = stats
                .map(|d| d.target)
                .or_else(|| NormStats::from_matrices(&feats))
                .ok_or_else(|| Error::Input(format!("{}: shorter than one segment", input.display())))?;
            feats
                .iter()
                .map(|f| s.target_image(f, st))
                .collect::<Result<_>>()?
        }
        "csv" => {
            let trace = RawAccelTrace::load_csv(input)?;
            let feats = prepare_trace(&trace, &cfg.prep)?
                .iter()
                .map(|g| s.accel_features(&g.values))
                .collect::<Result<Vec<_>>>()?;
            let st = stats
                .map(|d| d.condition)
                .or_else(|| NormStats::from_matrices(&feats))
                .ok_or_else(|| Error::Input(format!("{}: shorter than one segment", input.display())))?;
            feats
                .iter()
                .map(|f| s.condition_image(f, st))
                .collect::<Result<_>>()?
        }
        _ => {
            return Err(Error::Input(format!(
                "{}: expected a .wav, .csv or .aspc file",
                input.display()
            )))
        }
    };
    if images.is_empty() {
        return Err(Error::Input(format!(
            "{}: shorter than one {} s segment",
            input.display(),
            s.segment_seconds
        )));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut paths = Vec::with_capacity(images.len());
    for (k, img) in images.iter().enumerate() {
        let p = if images.len() == 1 && ext == "aspc" {
            out_dir.join(format!("{stem}.png"))
        } else {
            out_dir.join(format!("{stem}_{k:03}.png"))
        };
        img.save_png(&p)?;
        paths.push(p);
    }
    Ok(paths)
}
