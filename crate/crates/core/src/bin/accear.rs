use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use accear::channel_sim::{CorpusConfig, Scene};
use accear::pipeline::{
    self, parse_override, EvalSource, RunConfig, SplitSelect,
};
use accear::{Error, Result};

#[derive(Parser)]
#[command(name = "accear", version, about = "Speech reconstruction from accelerometer traces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Settings shared by every command. Flags override the config file.
#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, short = 'c')]
    config: Option<PathBuf>,
    /// Override any key, e.g. `--set train.epochs=5`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Redo work even if outputs are up to date.
    #[arg(long)]
    force: bool,
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    #[arg(long, value_name = "HZ")]
    sensor_rate_hz: Option<f64>,
    #[arg(long)]
    scene: Option<Scene>,
    #[arg(long)]
    volume: Option<f64>,
    #[arg(long)]
    split_ratio: Option<f64>,
    #[arg(long)]
    image_size: Option<usize>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    phase1_epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lambda_l1: Option<f64>,
    #[arg(long)]
    gl_iterations: Option<usize>,
}

impl Common {
    fn resolve(&self, fallback: Option<&Path>) -> Result<RunConfig> {
        // Dedicated flags are applied after `--set`, so they win.
        let mut o = self.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>>>()?;
        let mut push = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                o.push((k.to_string(), v));
            }
        };
        push("simulate.seed", self.seed.map(|v| v.to_string()));
        push("train.seed", self.seed.map(|v| v.to_string()));
        push("simulate.sensor_rate_hz", self.sensor_rate_hz.map(|v| format!("{v:?}")));
        push("simulate.scene", self.scene.map(|v| format!("\"{v}\"")));
        push("simulate.volume", self.volume.map(|v| format!("{v:?}")));
        push("simulate.split_ratio", self.split_ratio.map(|v| format!("{v:?}")));
        push("spectral.image_size", self.image_size.map(|v| v.to_string()));
        push("model.base_channels", self.base_channels.map(|v| v.to_string()));
        push("train.epochs", self.epochs.map(|v| v.to_string()));
        push("train.phase1_epochs", self.phase1_epochs.map(|v| v.to_string()));
        push("train.lr", self.lr.map(|v| format!("{v:?}")));
        push("train.batch_size", self.batch_size.map(|v| v.to_string()));
        push("train.lambda_l1", self.lambda_l1.map(|v| format!("{v:?}")));
        push("vocoder.iterations", self.gl_iterations.map(|v| v.to_string()));
        // Without --config, reuse the configuration stored with the input.
        let file = self
            .config
            .clone()
            .or_else(|| fallback.map(|d| d.join(pipeline::RUN_CONFIG_FILE)).filter(|p| p.exists()));
        RunConfig::resolve(file.as_deref(), &o)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic speech corpus (WAV + transcript per file).
    SynthCorpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4)]
        files: usize,
        #[arg(long, default_value_t = 12.0)]
        seconds: f64,
        #[arg(long, default_value_t = 4)]
        speakers: usize,
        #[arg(long, default_value_t = CorpusConfig::default().f0_min_hz)]
        f0_min_hz: f64,
        #[arg(long, default_value_t = CorpusConfig::default().f0_max_hz)]
        f0_max_hz: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Simulate accelerometer traces for a WAV folder and write the manifest.
    Simulate {
        #[arg(long)]
        audio_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Compute normalized condition/target images for a manifest.
    Prepare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train the generator on prepared images.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Turn an accelerometer CSV into speech.
    Reconstruct {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        accel: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Write condition/generated(/target) PNGs per segment here.
        #[arg(long)]
        export_spectrograms: Option<PathBuf>,
        /// Ground-truth WAV for the target PNGs.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Score audio against the manifest ground truth (MCD, WER).
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, conflicts_with_all = ["wav_dir", "baseline", "ground_truth"])]
        checkpoint: Option<PathBuf>,
        /// Folder of `<segment_id>.wav` files.
        #[arg(long, conflicts_with_all = ["baseline", "ground_truth"])]
        wav_dir: Option<PathBuf>,
        /// Score the untrained identity baseline.
        #[arg(long, conflicts_with = "ground_truth")]
        baseline: bool,
        /// Score the ground truth against itself.
        #[arg(long)]
        ground_truth: bool,
        /// TSV of segment_id, reference and hypothesis transcripts.
        #[arg(long)]
        transcripts: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: SplitSelect,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Render PNG spectrograms of a WAV, accelerometer CSV or .aspc image.
    ExportSpectrogram {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Use this manifest's geometry and scaling.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn parent(p: &Path) -> Option<&Path> {
    p.parent()
}

fn run(cli: Cli) -> Result<()> {
    pipeline::init_threads()?;
    let report = |o: pipeline::Outcome, what: &str| {
        let state = if o.skipped { "up to date" } else { "written" };
        println!("{what}: {} ({state})", o.path.display());
    };
    match cli.command {
        Command::SynthCorpus { out, files, seconds, speakers, f0_min_hz, f0_max_hz, seed } => {
            let cfg = CorpusConfig {
                files,
                seconds_per_file: seconds,
                speakers,
                f0_min_hz,
                f0_max_hz,
                seed,
                ..Default::default()
            };
            pipeline::cmd_synth_corpus(&out, &cfg)?;
            println!("corpus: {} ({files} files)", out.display());
        }
        Command::Simulate { audio_dir, out, common } => {
            let cfg = common.resolve(None)?;
            report(pipeline::cmd_simulate(&audio_dir, &out, &cfg, common.force)?, "manifest");
        }
        Command::Prepare { manifest, out, common } => {
            let cfg = common.resolve(parent(&manifest))?;
            report(pipeline::cmd_prepare(&manifest, &out, &cfg, common.force)?, "index");
        }
        Command::Train { data, out, resume, common } => {
            let cfg = common.resolve(Some(&data))?;
            let o = pipeline::cmd_train(&data, &out, &cfg, resume.as_deref(), common.force)?;
            report(o, "checkpoint");
            println!("losses: {}", out.join(pipeline::LOSSES_FILE).display());
        }
        Command::Reconstruct { checkpoint, accel, out, export_spectrograms, reference, common } => {
            let cfg = common.resolve(parent(&checkpoint))?;
            let o = pipeline::cmd_reconstruct(
                &checkpoint,
                &accel,
                &out,
                &cfg,
                export_spectrograms.as_deref(),
                reference.as_deref(),
                common.force,
            )?;
            report(o, "audio");
        }
        Command::Evaluate {
            manifest,
            checkpoint,
            wav_dir,
            baseline,
            ground_truth,
            transcripts,
            split,
            out,
            common,
        } => {
            let source = match (checkpoint, wav_dir, baseline, ground_truth) {
                (Some(c), ..) => EvalSource::Checkpoint(c),
                (_, Some(d), ..) => EvalSource::WavDir(d),
                (_, _, true, _) => EvalSource::Baseline,
                (_, _, _, true) => EvalSource::GroundTruth,
                _ => {
                    return Err(Error::Config(
                        "choose one of --checkpoint, --wav-dir, --baseline, --ground-truth".into(),
                    ))
                }
            };
            let fallback = match &source {
                EvalSource::Checkpoint(c) => parent(c).map(Path::to_path_buf),
                _ => parent(&manifest).map(Path::to_path_buf),
            };
            let cfg = common.resolve(fallback.as_deref())?;
            let eval = pipeline::cmd_evaluate(
                &manifest,
                &source,
                split,
                transcripts.as_deref(),
                &out,
                &cfg,
                common.force,
            )?;
            let s = &eval.summary;
            println!("segments: {}", s.segments);
            println!("mean MCD: {:.4}", s.mean_mcd);
            if let Some(l1) = s.mean_image_l1 {
                println!("mean image L1: {l1:.6}");
            }
            if let Some(w) = s.mean_wer {
                println!("mean WER: {w:.4}");
            }
            println!("report: {}", out.join(pipeline::REPORT_FILE).display());
        }
        Command::ExportSpectrogram { input, out, manifest, common } => {
            let cfg = common.resolve(manifest.as_deref().and_then(parent))?;
            for p in pipeline::cmd_export_spectrogram(&input, &out, manifest.as_deref(), &cfg)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
