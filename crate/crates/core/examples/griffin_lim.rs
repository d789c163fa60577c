//! Recover a waveform from the magnitude of a harmonic tone and print the
//! consistency error trace.
//!
//!     cargo run --example griffin_lim -- /tmp/tone.wav

use std::path::PathBuf;

use accear::spectral::StftPlan;
use accear::vocoder::{griffin_lim, relative_error, save_wav, GriffinLimConfig};

fn main() -> accear::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "tone.wav".into()));
    let rate = 16_000.0;
    let x: Vec<f64> = (0..32_000)
        .map(|i| {
            let t = i as f64 / rate;
            [(150.0, 1.0), (300.0, 0.5), (450.0, 0.25)]
                .iter()
                .map(|(f, a)| a * (2.0 * std::f64::consts::PI * f * t).sin())
                .sum()
        })
        .collect();
    let cfg = GriffinLimConfig { n_fft: 512, hop: 128, ..Default::default() };
    let mag = StftPlan::new(cfg.n_fft, cfg.hop)?.stft(&x, rate)?.magnitude();
    let res = griffin_lim(&mag, rate, &cfg, Some(x.len()))?;
    for (i, e) in res.errors.iter().enumerate().step_by(10) {
        println!("iteration {:>2}: consistency error {e:.4}", i + 1);
    }
    println!("relative spectral error {:.4}", relative_error(&mag, &res));
    save_wav(&out, &res.series)?;
    println!("wrote {}", out.display());
    Ok(())
}
