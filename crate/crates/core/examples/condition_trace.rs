//! Simulate a short accelerometer trace from a tone burst, then run the
//! conditioning chain and print what each stage produced.
//!
//!     cargo run --example condition_trace

use accear::channel_sim::{simulate_trace, ScenePreset, Scene, SensorProfile};
use accear::signal_prep::{condition_trace, prepare_trace, PrepConfig, UniformSeries};

fn main() -> accear::Result<()> {
    let rate = 16_000.0;
    // 9 s of a 120 Hz tone that switches on and off every half second.
    let audio: Vec<f64> = (0..(9.0 * rate) as usize)
        .map(|i| {
            let t = i as f64 / rate;
            let gate = if (t * 2.0) as usize % 2 == 0 { 1.0 } else { 0.0 };
            gate * 0.5 * (2.0 * std::f64::consts::PI * 120.0 * t).sin()
        })
        .collect();
    let audio = UniformSeries::new(rate, audio)?;

    let profile = SensorProfile::preset(500.0)?;
    let scene = ScenePreset { scene: Scene::Walking, volume: 0.8 };
    let trace = simulate_trace(&audio, &profile, &scene, 42)?;
    let z = trace.samples().iter().map(|s| s[2]).sum::<f64>() / trace.len() as f64;
    println!("raw trace: {} samples over {:.3} s, mean z {:.3} m/s²", trace.len(), trace.duration_s(), z);

    let cfg = PrepConfig::default();
    let uniform = condition_trace(&trace, &cfg)?;
    println!(
        "conditioned: {} samples at {} Hz (axis {}, {} Hz high-pass)",
        uniform.len(),
        uniform.rate_hz(),
        cfg.axis,
        cfg.cutoff_hz
    );
    for seg in prepare_trace(&trace, &cfg)? {
        let rms = (seg.values.iter().map(|v| v * v).sum::<f64>() / seg.values.len() as f64).sqrt();
        println!("  segment at sample {:>5}: {} samples, rms {rms:.4}", seg.source_offset, seg.values.len());
    }
    Ok(())
}
