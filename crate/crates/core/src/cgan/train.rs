use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{take, Checkpoint, TensorMap};
use super::generator::generator_input;
use super::{to_signed, Discriminator, Generator, NetConfig};
use crate::autodiff::{
    bce_with_logits, bce_with_logits_backward, l1, l1_backward, Adam, AdamConfig, Optimizer, Sgd,
    Tensor,
};
use crate::error::{Error, Result};
use crate::spectral::SpectroImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Leading epochs trained with plain gradient steps before Adam takes over.
    pub phase1_epochs: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub lambda_l1: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            phase1_epochs: 100,
            lr: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 4,
            lambda_l1: 100.0,
            seed: 0,
            checkpoint_every: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < self.phase1_epochs {
            return Err(Error::Parameter(format!(
                "epochs ({}) must be >= phase1_epochs ({})",
                self.epochs, self.phase1_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Parameter(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.lambda_l1 >= 0.0) {
            return Err(Error::Parameter("lambda_l1 must be >= 0".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// Paired `[0, 1]` images, condition and target, all `size × size`.
#[derive(Debug, Clone, Default)]
pub struct TrainingData {
    pub size: usize,
    pub conditions: Vec<Vec<f32>>,
    pub targets: Vec<Vec<f32>>,
}

impl TrainingData {
    pub fn from_images(pairs: &[(SpectroImage, SpectroImage)]) -> Result<Self> {
        let size = pairs.first().map(|(c, _)| c.rows()).unwrap_or(0);
        let mut data = TrainingData {
            size,
            ..Default::default()
        };
        for (c, t) in pairs {
            data.push(c.pixels().to_vec(), t.pixels().to_vec())?;
        }
        Ok(data)
    }

    pub fn push(&mut self, condition: Vec<f32>, target: Vec<f32>) -> Result<()> {
        let plane = self.size * self.size;
        if condition.len() != plane || target.len() != plane {
            return Err(Error::Shape(format!(
                "pair has {} / {} pixels, expected {plane}",
                condition.len(),
                target.len()
            )));
        }
        self.conditions.push(condition);
        self.targets.push(target);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.conditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty()
    }
}

/// Loss terms of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Losses {
    pub d_loss: f64,
    pub g_loss: f64,
    pub l1: f64,
    pub g_adv: f64,
}

impl Losses {
    fn is_finite(&self) -> bool {
        [self.d_loss, self.g_loss, self.l1, self.g_adv].iter().all(|v| v.is_finite())
    }
}

/// Both objectives from network outputs.
///
/// `fake` and `target` are generator output and ground truth in `[-1, 1]`;
/// the logits are the discriminator's grids for the real and generated pair.
pub fn composite_objective(
    fake: &Tensor<f32>,
    target: &Tensor<f32>,
    real_logits: &Tensor<f32>,
    fake_logits: &Tensor<f32>,
    lambda_l1: f64,
) -> Result<Losses> {
    let l1 = l1(fake, target)? as f64;
    let g_adv = bce_with_logits(fake_logits, 1.0) as f64;
    let d_loss = bce_with_logits(real_logits, 1.0) as f64 + bce_with_logits(fake_logits, 0.0) as f64;
    Ok(Losses {
        d_loss,
        g_loss: lambda_l1 * l1 + g_adv,
        l1,
        g_adv,
    })
}

/// Mean losses over one epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub phase: u8,
    pub losses: Losses,
}

/// Networks, optimizer state and the number of completed epochs.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub generator: Generator,
    pub discriminator: Discriminator,
    opt_g: Adam<f32>,
    opt_d: Adam<f32>,
    pub epoch: usize,
}

impl TrainState {
    pub fn new(net: NetConfig, cfg: &TrainConfig) -> Result<Self> {
        Ok(Self {
            generator: Generator::new(net, cfg.seed)?,
            discriminator: Discriminator::new(net, cfg.seed ^ 0x9e37_79b9_7f4a_7c15)?,
            opt_g: Adam::new(cfg.adam()),
            opt_d: Adam::new(cfg.adam()),
            epoch: 0,
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = TensorMap::new();
        self.generator.export(&mut tensors);
        self.discriminator.export(&mut tensors);
        for (name, opt) in [("opt_g", &self.opt_g), ("opt_d", &self.opt_d)] {
            let (t, m, v) = opt.state();
            tensors.insert(format!("{name}.t"), Tensor::filled([1, 1, 1, 1], t as f32));
            for (i, (mi, vi)) in m.iter().zip(v).enumerate() {
                tensors.insert(format!("{name}.m{i:03}"), mi.clone());
                tensors.insert(format!("{name}.v{i:03}"), vi.clone());
            }
        }
        Checkpoint {
            config: self.generator.config(),
            epoch: self.epoch as u32,
            tensors,
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, cfg: &TrainConfig) -> Result<Self> {
        let mut state = Self::new(ckpt.config, cfg)?;
        let mut map = ckpt.tensors.clone();
        state.generator.import(&mut map)?;
        state.discriminator.import(&mut map)?;
        let shapes_g: Vec<_> = state.generator.params_mut().iter().map(|p| p.value.shape()).collect();
        let shapes_d: Vec<_> = state.discriminator.params_mut().iter().map(|p| p.value.shape()).collect();
        for (name, opt, shapes) in [("opt_g", &mut state.opt_g, shapes_g), ("opt_d", &mut state.opt_d, shapes_d)] {
            let t = match map.remove(&format!("{name}.t")) {
                Some(t) => t.data()[0] as i32,
                None => continue,
            };
            if t == 0 {
                continue;
            }
            let mut m = Vec::with_capacity(shapes.len());
            let mut v = Vec::with_capacity(shapes.len());
            for (i, shape) in shapes.into_iter().enumerate() {
                m.push(take(&mut map, &format!("{name}.m{i:03}"), shape)?);
                v.push(take(&mut map, &format!("{name}.v{i:03}"), shape)?);
            }
            opt.set_state(t, m, v);
        }
        state.epoch = ckpt.epoch as usize;
        Ok(state)
    }

    /// One discriminator update followed by one generator update.
    fn iterate(
        &mut self,
        input: &Tensor<f32>,
        target: &Tensor<f32>,
        cfg: &TrainConfig,
        phase1: bool,
    ) -> Result<Losses> {
        let (cond, _) = input.split_channels(1);
        let fake = self.generator.forward(input)?;

        let d = &mut self.discriminator;
        d.zero_grad();
        let real_logits = d.forward(&Tensor::concat_channels(&cond, target)?)?;
        d.backward(&bce_with_logits_backward(&real_logits, 1.0))?;
        let fake_logits = d.forward(&Tensor::concat_channels(&cond, &fake)?)?;
        d.backward(&bce_with_logits_backward(&fake_logits, 0.0))?;
        let d_loss =
            bce_with_logits(&real_logits, 1.0) as f64 + bce_with_logits(&fake_logits, 0.0) as f64;
        step(&mut self.opt_d, d.params_mut(), cfg, phase1);

        d.zero_grad();
        let logits = d.forward(&Tensor::concat_channels(&cond, &fake)?)?;
        let d_input = d.backward(&bce_with_logits_backward(&logits, 1.0))?;
        d.zero_grad();
        let (_, mut d_fake) = d_input.split_channels(1);
        let lambda = cfg.lambda_l1 as f32;
        for (g, l) in d_fake.data_mut().iter_mut().zip(l1_backward(&fake, target)?.data()) {
            *g += lambda * *l;
        }
        self.generator.zero_grad();
        self.generator.backward(&d_fake)?;
        step(&mut self.opt_g, self.generator.params_mut(), cfg, phase1);

        let l1 = l1(&fake, target)? as f64;
        let g_adv = bce_with_logits(&logits, 1.0) as f64;
        Ok(Losses {
            d_loss,
            g_loss: cfg.lambda_l1 * l1 + g_adv,
            l1,
            g_adv,
        })
    }
}

fn step(adam: &mut Adam<f32>, mut params: Vec<&mut crate::autodiff::Param<f32>>, cfg: &TrainConfig, phase1: bool) {
    if phase1 {
        Sgd { lr: cfg.lr }.step(&mut params);
    } else {
        adam.step(&mut params);
    }
}

/// Trains from scratch; see [`train_with_progress`].
pub fn train(data: &TrainingData, net: NetConfig, cfg: &TrainConfig) -> Result<(TrainState, Vec<EpochStats>)> {
    let mut history = Vec::new();
    let state = train_with_progress(data, TrainState::new(net, cfg)?, cfg, |s, _| {
        history.push(*s);
        Ok(())
    })?;
    Ok((state, history))
}

/// Runs the remaining epochs of `state`, calling `on_epoch` after each.
///
/// Every epoch draws its shuffle and noise from a stream keyed by the seed
/// and epoch number, so a resumed run matches an uninterrupted one.
pub fn train_with_progress(
    data: &TrainingData,
    mut state: TrainState,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &TrainState) -> Result<()>,
) -> Result<TrainState> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    let size = state.generator.config().image_size;
    if data.size != size {
        return Err(Error::Shape(format!(
            "training images are {0}x{0}, network expects {size}x{size}",
            data.size
        )));
    }
    let plane = size * size;
    let mut order: Vec<usize> = (0..data.len()).collect();
    while state.epoch < cfg.epochs {
        let epoch = state.epoch;
        let phase1 = epoch < cfg.phase1_epochs;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(epoch as u64 + 1);
        order.sort_unstable();
        order.shuffle(&mut rng);
        let mut sum = Losses::default();
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let conds: Vec<&[f32]> = chunk.iter().map(|&i| data.conditions[i].as_slice()).collect();
            let input = generator_input(&conds, size, &mut rng)?;
            let mut tdata = Vec::with_capacity(chunk.len() * plane);
            for &i in chunk {
                tdata.extend(data.targets[i].iter().map(|&v| to_signed(v)));
            }
            let target = Tensor::from_vec([chunk.len(), 1, size, size], tdata)?;
            let losses = state.iterate(&input, &target, cfg, phase1)?;
            if !losses.is_finite() {
                return Err(Error::NonFinite(format!(
                    "epoch {epoch} batch {b}: d_loss {} g_loss {} l1 {}",
                    losses.d_loss, losses.g_loss, losses.l1
                )));
            }
            sum.d_loss += losses.d_loss;
            sum.g_loss += losses.g_loss;
            sum.l1 += losses.l1;
            sum.g_adv += losses.g_adv;
            batches += 1;
        }
        let n = batches as f64;
        let stats = EpochStats {
            epoch,
            phase: if phase1 { 1 } else { 2 },
            losses: Losses {
                d_loss: sum.d_loss / n,
                g_loss: sum.g_loss / n,
                l1: sum.l1 / n,
                g_adv: sum.g_adv / n,
            },
        };
        state.epoch += 1;
        on_epoch(&stats, &state)?;
    }
    Ok(state)
}

/// The condition image resampled onto the target's pixel grid and relabeled
/// with the target's metadata, the no-learning reference for the generator.
pub fn identity_baseline(condition: &SpectroImage, target: &SpectroImage) -> Result<SpectroImage> {
    let pixels = condition.resize_bicubic(target.rows(), target.cols());
    target.with_pixels(pixels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Param;

    fn net() -> NetConfig {
        NetConfig { image_size: 32, base_channels: 4 }
    }

    fn toy_data(n: usize, seed: u64) -> TrainingData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = TrainingData { size: 32, ..Default::default() };
        for _ in 0..n {
            let f: f32 = rand::Rng::random_range(&mut rng, 0.1..0.9);
            let cond: Vec<f32> = (0..1024).map(|i| if (i / 32) < 8 { f } else { 0.0 }).collect();
            let target: Vec<f32> = (0..1024).map(|i| f * (1.0 - (i / 32) as f32 / 32.0)).collect();
            data.push(cond, target).unwrap();
        }
        data
    }

    fn param_bytes(ps: Vec<&mut Param<f32>>) -> Vec<u32> {
        ps.iter().flat_map(|p| p.value.data().iter().map(|v| v.to_bits())).collect()
    }

    #[test]
    fn objective_closed_forms() {
        let x = Tensor::filled([1, 1, 4, 4], 0.3f32);
        let zeros = Tensor::zeros([1, 1, 2, 2]);
        let l = composite_objective(&x, &x, &zeros, &zeros, 100.0).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert_eq!(l.l1, 0.0);
        assert!((l.g_adv - ln2).abs() < 1e-6);
        assert!((l.d_loss - 2.0 * ln2).abs() < 1e-6);
        let y = Tensor::filled([1, 1, 4, 4], -0.2f32);
        let l0 = composite_objective(&x, &y, &zeros, &zeros, 0.0).unwrap();
        assert_eq!(l0.g_loss, l0.g_adv);
    }

    #[test]
    fn history_is_reproducible() {
        let cfg = TrainConfig { epochs: 2, phase1_epochs: 1, batch_size: 4, seed: 3, ..Default::default() };
        let data = toy_data(8, 1);
        let (a, ha) = train(&data, net(), &cfg).unwrap();
        let (b, hb) = train(&data, net(), &cfg).unwrap();
        assert_eq!(ha, hb);
        assert_eq!(ha.len(), 2);
        assert_eq!(ha[0].phase, 1);
        assert_eq!(ha[1].phase, 2);
        assert!(ha.iter().all(|s| s.losses.is_finite()));
        assert_eq!(a.to_checkpoint(), b.to_checkpoint());
    }

    #[test]
    fn resume_matches_uninterrupted() {
        let cfg = TrainConfig { epochs: 3, phase1_epochs: 1, batch_size: 3, seed: 11, ..Default::default() };
        let data = toy_data(5, 2);
        let (full, _) = train(&data, net(), &cfg).unwrap();
        let first = TrainConfig { epochs: 2, ..cfg };
        let (half, _) = train(&data, net(), &first).unwrap();
        let ckpt = half.to_checkpoint();
        let mut bytes = Vec::new();
        super::super::write_checkpoint(&mut bytes, &ckpt).unwrap();
        let restored = TrainState::from_checkpoint(&super::super::read_checkpoint(bytes.as_slice(), &net()).unwrap(), &cfg).unwrap();
        assert_eq!(restored.epoch, 2);
        let mut epochs = Vec::new();
        let resumed = train_with_progress(&data, restored, &cfg, |s, _| {
            epochs.push(s.epoch);
            Ok(())
        })
        .unwrap();
        assert_eq!(epochs, [2]);
        assert_eq!(resumed.to_checkpoint(), full.to_checkpoint());
    }

    #[test]
    fn alternation_freezes_the_other_network() {
        let cfg = TrainConfig { phase1_epochs: 0, ..Default::default() };
        let data = toy_data(2, 4);
        let mut state = TrainState::new(net(), &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let conds: Vec<&[f32]> = data.conditions.iter().map(|c| c.as_slice()).collect();
        let input = generator_input(&conds, 32, &mut rng).unwrap();
        let target = Tensor::from_vec([2, 1, 32, 32], data.targets.concat()).unwrap();

        // Replay the two halves of an iteration by hand and compare.
        let g_before = param_bytes(state.generator.params_mut());
        let d_before = param_bytes(state.discriminator.params_mut());
        let mut after = state.clone();
        after.iterate(&input, &target, &cfg, false).unwrap();
        let g_after = param_bytes(after.generator.params_mut());
        let d_after = param_bytes(after.discriminator.params_mut());
        assert_ne!(g_before, g_after);
        assert_ne!(d_before, d_after);

        // The discriminator step alone leaves the generator untouched.
        let (cond, _) = input.split_channels(1);
        let fake = state.generator.forward(&input).unwrap();
        let d = &mut state.discriminator;
        d.zero_grad();
        let r = d.forward(&Tensor::concat_channels(&cond, &target).unwrap()).unwrap();
        d.backward(&bce_with_logits_backward(&r, 1.0)).unwrap();
        let f = d.forward(&Tensor::concat_channels(&cond, &fake).unwrap()).unwrap();
        d.backward(&bce_with_logits_backward(&f, 0.0)).unwrap();
        step(&mut state.opt_d, d.params_mut(), &cfg, false);
        assert_eq!(param_bytes(state.generator.params_mut()), g_before);
        assert_eq!(param_bytes(state.discriminator.params_mut()), d_after);
    }

    #[test]
    fn memorizes_a_single_pair() {
        let data = toy_data(1, 5);
        let cfg = TrainConfig {
            epochs: 200,
            phase1_epochs: 0,
            batch_size: 1,
            lr: 2e-3,
            seed: 1,
            ..Default::default()
        };
        let (_, hist) = train(&data, net(), &cfg).unwrap();
        let first = hist[0].losses.l1;
        let last = hist.last().unwrap().losses.l1;
        assert!(last < 0.1 * first, "l1 {first} -> {last}");
    }

    #[test]
    fn errors() {
        let cfg = TrainConfig::default();
        assert!(matches!(train(&TrainingData { size: 32, ..Default::default() }, net(), &cfg), Err(Error::Input(_))));
        let bad = TrainConfig { epochs: 1, phase1_epochs: 2, ..Default::default() };
        assert!(matches!(train(&toy_data(1, 0), net(), &bad), Err(Error::Parameter(_))));
        let data = TrainingData { size: 64, conditions: vec![vec![0.0; 4096]], targets: vec![vec![0.0; 4096]] };
        assert!(train(&data, net(), &TrainConfig { epochs: 1, phase1_epochs: 0, ..cfg }).is_err());
    }
}
