//! The whole pipeline through the library API: corpus, simulation, images,
//! training, reconstruction and scoring.
//!
//!     cargo run --release --example end_to_end -- /tmp/accear-run

use std::path::PathBuf;

use accear::channel_sim::CorpusConfig;
use accear::pipeline::{self, EvalSource, RunConfig, SplitSelect};

fn main() -> accear::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "accear-run".into()));
    pipeline::init_threads()?;

    let cfg = RunConfig::from_toml(
        r#"
        [spectral]
        image_size = 64
        [model]
        base_channels = 8
        [train]
        epochs = 10
        phase1_epochs = 0
        "#,
    )?;
    pipeline::cmd_synth_corpus(&root.join("corpus"), &CorpusConfig { files: 12, speakers: 4, ..Default::default() })?;
    let manifest = pipeline::cmd_simulate(&root.join("corpus"), &root.join("sim"), &cfg, false)?.path;
    pipeline::cmd_prepare(&manifest, &root.join("prep"), &cfg, false)?;
    let ckpt = pipeline::cmd_train(&root.join("prep"), &root.join("model"), &cfg, None, false)?.path;

    let first = root.join("sim/traces").read_dir()?.flatten().map(|e| e.path()).min().expect("a trace");
    let wav = root.join("out").join("reconstructed.wav");
    pipeline::cmd_reconstruct(&ckpt, &first, &wav, &cfg, Some(&root.join("out/png")), None, false)?;
    println!("reconstructed {} -> {}", first.display(), wav.display());

    for (name, source) in [("baseline", EvalSource::Baseline), ("model", EvalSource::Checkpoint(ckpt.clone()))] {
        let e = pipeline::cmd_evaluate(&manifest, &source, SplitSelect::Test, None, &root.join("eval").join(name), &cfg, false)?;
        println!(
            "{name:>8}: mean MCD {:.3}, mean image L1 {:.4}",
            e.summary.mean_mcd,
            e.summary.mean_image_l1.unwrap_or(f64::NAN)
        );
    }
    Ok(())
}
