//! Build the condition and target images for one synthetic utterance and
//! write them as PNGs.
//!
//!     cargo run --example spectrograms -- /tmp/spectrograms

use std::path::PathBuf;

use accear::channel_sim::{simulate_trace, synthesize_corpus, CorpusConfig, ScenePreset, SensorProfile};
use accear::signal_prep::{prepare_trace, segment, PrepConfig};
use accear::spectral::{NormStats, SpectralConfig};

fn main() -> accear::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "spectrograms".into()));
    std::fs::create_dir_all(&out)?;

    let corpus = synthesize_corpus(&CorpusConfig { files: 1, seconds_per_file: 8.0, ..Default::default() })?;
    let utt = &corpus[0];
    let trace = simulate_trace(&utt.audio, &SensorProfile::preset(500.0)?, &ScenePreset::default(), 7)?;

    let spectral = SpectralConfig { image_size: 64, ..Default::default() };
    let prep = PrepConfig::default();
    let fb = spectral.filterbank()?;
    let accel = prepare_trace(&trace, &prep)?;
    let speech = segment(&utt.audio, prep.segment_seconds)?;

    let cond: Vec<_> = accel.iter().map(|s| spectral.accel_features(&s.values)).collect::<Result<_, _>>()?;
    let target: Vec<_> = speech.iter().map(|s| spectral.audio_features(&s.values, &fb)).collect::<Result<_, _>>()?;
    let cs = NormStats::from_matrices(&cond).expect("segments");
    let ts = NormStats::from_matrices(&target).expect("segments");

    for (k, (c, t)) in cond.iter().zip(&target).enumerate() {
        let ci = spectral.condition_image(c, cs)?;
        let ti = spectral.target_image(t, ts)?;
        ci.save_png(&out.join(format!("{}_{k}_condition.png", utt.name)))?;
        ti.save_png(&out.join(format!("{}_{k}_target.png", utt.name)))?;
        println!("segment {k}: \"{}\"", utt.transcripts[k]);
    }
    println!("wrote {} image pairs to {}", cond.len(), out.display());
    Ok(())
}
