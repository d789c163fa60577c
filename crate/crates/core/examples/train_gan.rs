//! Train a small conditional GAN on toy image pairs where the target is a
//! shifted copy of the condition, then compare against the identity
//! baseline.
//!
//!     cargo run --release --example train_gan

use accear::cgan::{train, NetConfig, TrainConfig, TrainingData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> accear::Result<()> {
    let size = 32;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut data = TrainingData { size, ..Default::default() };
    for _ in 0..16 {
        let row = rng.random_range(4..size - 12);
        let mut cond = vec![0.0f32; size * size];
        let mut target = vec![0.0f32; size * size];
        for c in 0..size {
            cond[row * size + c] = 1.0;
            target[(row + 8) * size + c] = 1.0;
        }
        data.push(cond, target)?;
    }
    let net = NetConfig { image_size: size, base_channels: 8 };
    let cfg = TrainConfig { epochs: 60, phase1_epochs: 0, lr: 2e-3, ..Default::default() };
    let (_, history) = train(&data, net, &cfg)?;
    for s in history.iter().step_by(10) {
        println!(
            "epoch {:>3}: d {:.3} g {:.3} l1 {:.4}",
            s.epoch, s.losses.d_loss, s.losses.g_loss, s.losses.l1
        );
    }
    let identity: f32 = data
        .conditions
        .iter()
        .zip(&data.targets)
        .map(|(c, t)| c.iter().zip(t).map(|(a, b)| 2.0 * (a - b).abs()).sum::<f32>() / c.len() as f32)
        .sum::<f32>()
        / data.len() as f32;
    println!("identity baseline l1 (signed scale) {identity:.4}");
    Ok(())
}
