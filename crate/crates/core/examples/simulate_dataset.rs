//! Synthesize a small corpus, simulate a 200 Hz sensor in a restaurant and
//! write the paired manifest.
//!
//!     cargo run --example simulate_dataset -- /tmp/dataset

use std::path::PathBuf;

use accear::channel_sim::{
    make_dataset, synthesize_corpus, write_corpus, CorpusConfig, DatasetOptions, Scene,
    ScenePreset, SensorProfile, Split,
};
use accear::signal_prep::PrepConfig;
use accear::spectral::SpectralConfig;

fn main() -> accear::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "dataset".into()));
    let corpus_dir = root.join("corpus");
    write_corpus(&corpus_dir, &synthesize_corpus(&CorpusConfig { files: 5, ..Default::default() })?)?;

    let opts = DatasetOptions {
        profile: SensorProfile::preset(200.0)?,
        scene: ScenePreset { scene: Scene::Restaurant, volume: 0.7 },
        seed: 3,
        split_ratio: 0.8,
        spectral: SpectralConfig { image_size: 64, ..Default::default() },
        prep: PrepConfig::default(),
    };
    let m = make_dataset(&corpus_dir, &root.join("sim"), &opts)?;
    println!(
        "{} segments: {} train, {} test",
        m.segments.len(),
        m.split(Split::Train).count(),
        m.split(Split::Test).count()
    );
    println!("condition range {:?}", m.stats.condition);
    println!("target range    {:?}", m.stats.target);
    if let Some(w) = m.word_overlap {
        println!(
            "words: {} train, {} test, {} shared",
            w.train_words, w.test_words, w.overlapping_words
        );
    }
    Ok(())
}
