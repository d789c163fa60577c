use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::checkpoint::{export_bn, export_layer, import_bn, import_layer, TensorMap};
use super::{to_signed, to_unit, NetConfig};
use crate::autodiff::{
    activation_backward, activation_forward, Activation, BatchNorm2d, Conv2d, ConvTranspose2d,
    Param, Tensor,
};
use crate::error::{Error, Result};
use crate::spectral::SpectroImage;

const LEAK: Activation = Activation::LeakyRelu(0.2);

/// U-Net: stride-2 encoder, mirrored transposed-conv decoder, and a skip
/// from encoder level `i - 1` into the output of decoder level `i`.
///
/// Input has two channels (condition and noise) in `[-1, 1]`; the output
/// is one tanh channel of the same spatial size.
#[derive(Debug, Clone)]
pub struct Generator {
    config: NetConfig,
    enc: Vec<Conv2d<f32>>,
    enc_bn: Vec<Option<BatchNorm2d<f32>>>,
    dec: Vec<ConvTranspose2d<f32>>,
    dec_bn: Vec<Option<BatchNorm2d<f32>>>,
    tape: Option<Tape>,
}

#[derive(Debug, Clone)]
struct Tape {
    /// Encoder level outputs (after norm, before the next activation).
    enc_out: Vec<Tensor<f32>>,
    /// Decoder level inputs (before ReLU).
    dec_in: Vec<Tensor<f32>>,
    out: Tensor<f32>,
}

impl Generator {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = config.depth();
        let mut enc = Vec::with_capacity(depth);
        let mut enc_bn = Vec::with_capacity(depth);
        for i in 0..depth {
            let in_c = if i == 0 { 2 } else { config.channels(i - 1) };
            let out_c = config.channels(i);
            enc.push(Conv2d::new(in_c, out_c, 4, 2, 1, &mut rng));
            let norm = i > 0 && i + 1 < depth;
            enc_bn.push(norm.then(|| BatchNorm2d::new(out_c)));
        }
        let mut dec = Vec::with_capacity(depth);
        let mut dec_bn = Vec::with_capacity(depth);
        for j in 0..depth {
            let in_c = if j + 1 == depth {
                config.channels(j)
            } else {
                2 * config.channels(j)
            };
            let out_c = if j == 0 { 1 } else { config.channels(j - 1) };
            dec.push(ConvTranspose2d::new(in_c, out_c, 4, 2, 1, &mut rng));
            dec_bn.push((j > 0).then(|| BatchNorm2d::new(out_c)));
        }
        Ok(Self {
            config,
            enc,
            enc_bn,
            dec,
            dec_bn,
            tape: None,
        })
    }

    pub fn config(&self) -> NetConfig {
        self.config
    }

    fn check_input(&self, x: &Tensor<f32>) -> Result<()> {
        let s = self.config.image_size;
        if x.channels() != 2 || x.height() != s || x.width() != s {
            return Err(Error::Shape(format!(
                "generator expects [n, 2, {s}, {s}], got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    fn run(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check_input(x)?;
        let depth = self.enc.len();
        let mut enc_out: Vec<Tensor<f32>> = Vec::with_capacity(depth);
        for i in 0..depth {
            let a = if i == 0 {
                x.clone()
            } else {
                activation_forward(LEAK, &enc_out[i - 1])
            };
            let mut z = self.enc[i].forward(&a)?;
            if let Some(bn) = &mut self.enc_bn[i] {
                z = bn.forward(&z)?;
            }
            enc_out.push(z);
        }
        let mut dec_in = vec![Tensor::zeros([1, 1, 1, 1]); depth];
        let mut u = enc_out[depth - 1].clone();
        for j in (0..depth).rev() {
            let r = activation_forward(Activation::Relu, &u);
            let mut z = self.dec[j].forward(&r)?;
            dec_in[j] = u;
            if let Some(bn) = &mut self.dec_bn[j] {
                z = bn.forward(&z)?;
            }
            u = if j > 0 { Tensor::concat_channels(&z, &enc_out[j - 1])? } else { z };
        }
        let out = activation_forward(Activation::Tanh, &u);
        self.tape = Some(Tape {
            enc_out,
            dec_in,
            out: out.clone(),
        });
        Ok(out)
    }

    /// Training-mode forward; batch statistics, caches for [`Generator::backward`].
    pub fn forward(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.run(x)
    }

    /// Inference with running normalization statistics.
    pub fn infer(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check_input(x)?;
        let depth = self.enc.len();
        let mut enc_out: Vec<Tensor<f32>> = Vec::with_capacity(depth);
        for i in 0..depth {
            let a = if i == 0 {
                x.clone()
            } else {
                activation_forward(LEAK, &enc_out[i - 1])
            };
            let mut z = self.enc[i].infer(&a)?;
            if let Some(bn) = &self.enc_bn[i] {
                z = bn.infer(&z)?;
            }
            enc_out.push(z);
        }
        let mut u = enc_out.pop().expect("depth >= 1");
        for j in (0..depth).rev() {
            let mut z = self.dec[j].infer(&activation_forward(Activation::Relu, &u))?;
            if let Some(bn) = &self.dec_bn[j] {
                z = bn.infer(&z)?;
            }
            u = match enc_out.pop() {
                Some(skip) => Tensor::concat_channels(&z, &skip)?,
                None => z,
            };
        }
        Ok(activation_forward(Activation::Tanh, &u))
    }

    /// Accumulates parameter gradients from the output gradient `dy`.
    pub fn backward(&mut self, dy: &Tensor<f32>) -> Result<()> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::Shape("generator backward before forward".into()))?;
        let depth = self.enc.len();
        let mut d_enc: Vec<Option<Tensor<f32>>> = vec![None; depth];
        let mut du = activation_backward(Activation::Tanh, &tape.out, &tape.out, dy)?;
        for j in 0..depth {
            let mut dz = if j > 0 {
                let c = self.dec[j].out_channels();
                let (dz, dskip) = du.split_channels(c);
                d_enc[j - 1] = Some(dskip);
                dz
            } else {
                du
            };
            if let Some(bn) = &mut self.dec_bn[j] {
                dz = bn.backward(&dz)?;
            }
            let dr = self.dec[j].backward(&dz)?;
            du = activation_backward(Activation::Relu, &tape.dec_in[j], &tape.dec_in[j], &dr)?;
        }
        // `du` now holds the gradient reaching the bottleneck from the decoder.
        let mut dh = du;
        for i in (0..depth).rev() {
            if i + 1 < depth {
                if let Some(skip) = d_enc[i].take() {
                    dh.add_assign(&skip);
                }
            }
            if let Some(bn) = &mut self.enc_bn[i] {
                dh = bn.backward(&dh)?;
            }
            let da = self.enc[i].backward(&dh)?;
            if i > 0 {
                dh = activation_backward(LEAK, &tape.enc_out[i - 1], &tape.enc_out[i - 1], &da)?;
            }
        }
        Ok(())
    }

    /// Single-image inference: condition in `[0, 1]`, noise channel drawn
    /// from `noise_seed`, result mapped back to `[0, 1]`.
    pub fn generate(&self, condition: &SpectroImage, noise_seed: u64) -> Result<SpectroImage> {
        let s = self.config.image_size;
        if condition.rows() != s || condition.cols() != s {
            return Err(Error::Shape(format!(
                "condition is {}x{}, generator expects {s}x{s}",
                condition.rows(),
                condition.cols()
            )));
        }
        let input = generator_input(&[condition.pixels()], s, &mut ChaCha8Rng::seed_from_u64(noise_seed))?;
        let out = self.infer(&input)?;
        condition.with_pixels(out.data().iter().map(|&v| to_unit(v)).collect())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<f32>> {
        let mut out = Vec::new();
        for (c, bn) in self.enc.iter_mut().zip(&mut self.enc_bn) {
            out.extend(c.params_mut());
            if let Some(bn) = bn {
                out.extend(bn.params_mut());
            }
        }
        for (c, bn) in self.dec.iter_mut().zip(&mut self.dec_bn) {
            out.extend(c.params_mut());
            if let Some(bn) = bn {
                out.extend(bn.params_mut());
            }
        }
        out
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn param_count(&self) -> usize {
        let conv: usize = self.enc.iter().flat_map(|c| c.params()).map(|p| p.value.len()).sum::<usize>()
            + self.dec.iter().flat_map(|c| c.params()).map(|p| p.value.len()).sum::<usize>();
        let bn: usize = self
            .enc_bn
            .iter()
            .chain(&self.dec_bn)
            .flatten()
            .flat_map(|b| b.params())
            .map(|p| p.value.len())
            .sum();
        conv + bn
    }

    pub(crate) fn export(&self, out: &mut TensorMap) {
        for (i, (c, bn)) in self.enc.iter().zip(&self.enc_bn).enumerate() {
            export_layer(out, &format!("g.enc{i}"), c.params());
            if let Some(bn) = bn {
                export_bn(out, &format!("g.enc{i}.bn"), bn);
            }
        }
        for (j, (c, bn)) in self.dec.iter().zip(&self.dec_bn).enumerate() {
            export_layer(out, &format!("g.dec{j}"), c.params());
            if let Some(bn) = bn {
                export_bn(out, &format!("g.dec{j}.bn"), bn);
            }
        }
    }

    pub(crate) fn import(&mut self, map: &mut TensorMap) -> Result<()> {
        for (i, (c, bn)) in self.enc.iter_mut().zip(&mut self.enc_bn).enumerate() {
            import_layer(map, &format!("g.enc{i}"), c.params_mut())?;
            if let Some(bn) = bn {
                import_bn(map, &format!("g.enc{i}.bn"), bn)?;
            }
        }
        for (j, (c, bn)) in self.dec.iter_mut().zip(&mut self.dec_bn).enumerate() {
            import_layer(map, &format!("g.dec{j}"), c.params_mut())?;
            if let Some(bn) = bn {
                import_bn(map, &format!("g.dec{j}.bn"), bn)?;
            }
        }
        Ok(())
    }
}

/// Stacks `[0, 1]` condition images with a standard-normal noise channel.
pub(crate) fn generator_input(
    conditions: &[&[f32]],
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor<f32>> {
    let plane = size * size;
    let mut data = Vec::with_capacity(conditions.len() * 2 * plane);
    for c in conditions {
        if c.len() != plane {
            return Err(Error::Shape(format!("condition has {} pixels, expected {plane}", c.len())));
        }
        data.extend(c.iter().map(|&v| to_signed(v)));
        data.extend((0..plane).map(|_| -> f32 { StandardNormal.sample(rng) }));
    }
    Tensor::from_vec([conditions.len(), 2, size, size], data)
}
