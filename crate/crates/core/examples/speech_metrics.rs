//! Mel-cepstral distortion between a clean and a degraded signal, and the
//! word error rate of a hypothesis transcript.
//!
//!     cargo run --example speech_metrics

use accear::metrics::{mcd, mfcc, tokenize, wer, MfccConfig};
use accear::signal_prep::UniformSeries;

fn main() -> accear::Result<()> {
    let rate = 16_000.0;
    let clean: Vec<f64> = (0..16_000)
        .map(|i| {
            let t = i as f64 / rate;
            (1..20).map(|h| (2.0 * std::f64::consts::PI * 120.0 * h as f64 * t).sin() / h as f64).sum()
        })
        .collect();
    let cfg = MfccConfig::default();
    let reference = mfcc(&UniformSeries::new(rate, clean.clone())?, &cfg)?;
    for cut in [2000.0, 1000.0, 500.0] {
        // Crude low-pass: keep only harmonics below the cut.
        let degraded: Vec<f64> = (0..16_000)
            .map(|i| {
                let t = i as f64 / rate;
                (1..20)
                    .filter(|h| 120.0 * *h as f64 <= cut)
                    .map(|h| (2.0 * std::f64::consts::PI * 120.0 * h as f64 * t).sin() / h as f64)
                    .sum()
            })
            .collect();
        let d = mcd(&reference, &mfcc(&UniformSeries::new(rate, degraded)?, &cfg)?)?;
        println!("harmonics below {cut:>4} Hz: MCD {d:.3}");
    }

    let r = tokenize("The quick brown fox jumps over the lazy dog.");
    let h = tokenize("the quick brown box jumps over lazy dog today");
    let b = wer(&r, &h)?;
    println!(
        "WER {:.3} (S {} D {} I {} over N {})",
        b.rate(),
        b.substitutions,
        b.deletions,
        b.insertions,
        b.reference_len
    );
    Ok(())
}
