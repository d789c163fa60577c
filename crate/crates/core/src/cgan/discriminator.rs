use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{export_bn, export_layer, import_bn, import_layer, TensorMap};
use super::NetConfig;
use crate::autodiff::{
    activation_backward, activation_forward, Activation, BatchNorm2d, Conv2d, Param, Tensor,
};
use crate::error::{Error, Result};

const LEAK: Activation = Activation::LeakyRelu(0.2);

/// Patch discriminator over `concat(condition, candidate)`.
///
/// Three stride-2 convolutions, then two stride-1 convolutions ending in a
/// single-channel grid of logits, one per receptive-field patch.
#[derive(Debug, Clone)]
pub struct Discriminator {
    config: NetConfig,
    convs: Vec<Conv2d<f32>>,
    norms: Vec<Option<BatchNorm2d<f32>>>,
    /// Pre-activation outputs of every layer but the last.
    tape: Option<Vec<Tensor<f32>>>,
}

impl Discriminator {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = config.base_channels;
        let spec = [(2, b, 2), (b, 2 * b, 2), (2 * b, 4 * b, 2), (4 * b, 8 * b, 1), (8 * b, 1, 1)];
        let convs = spec
            .iter()
            .map(|&(i, o, s)| Conv2d::new(i, o, 4, s, 1, &mut rng))
            .collect();
        let norms = spec
            .iter()
            .enumerate()
            .map(|(k, &(_, o, _))| (k > 0 && k < 4).then(|| BatchNorm2d::new(o)))
            .collect();
        Ok(Self {
            config,
            convs,
            norms,
            tape: None,
        })
    }

    /// Side of the patch grid produced for the configured image size.
    pub fn grid_size(&self) -> usize {
        grid_size(self.config.image_size)
    }

    fn check_input(&self, x: &Tensor<f32>) -> Result<()> {
        let s = self.config.image_size;
        if x.channels() != 2 || x.height() != s || x.width() != s {
            return Err(Error::Shape(format!(
                "discriminator expects [n, 2, {s}, {s}], got {:?}",
                x.shape()
            )));
        }
        Ok(())
    }

    /// Training-mode forward returning logits `[n, 1, g, g]`.
    pub fn forward(&mut self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check_input(x)?;
        let last = self.convs.len() - 1;
        let mut tape = Vec::with_capacity(last);
        let mut h = x.clone();
        for k in 0..=last {
            let mut z = self.convs[k].forward(&h)?;
            if let Some(bn) = &mut self.norms[k] {
                z = bn.forward(&z)?;
            }
            if k == last {
                h = z;
            } else {
                h = activation_forward(LEAK, &z);
                tape.push(z);
            }
        }
        self.tape = Some(tape);
        Ok(h)
    }

    pub fn infer(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.check_input(x)?;
        let last = self.convs.len() - 1;
        let mut h = x.clone();
        for k in 0..=last {
            let mut z = self.convs[k].infer(&h)?;
            if let Some(bn) = &self.norms[k] {
                z = bn.infer(&z)?;
            }
            h = if k == last { z } else { activation_forward(LEAK, &z) };
        }
        Ok(h)
    }

    /// Mean over the grid of per-patch probabilities, one per sample.
    pub fn decision(&self, x: &Tensor<f32>) -> Result<Vec<f32>> {
        let logits = self.infer(x)?;
        let sig = activation_forward(Activation::Sigmoid, &logits);
        Ok((0..sig.batch())
            .map(|i| {
                let s = sig.sample(i);
                s.iter().sum::<f32>() / s.len() as f32
            })
            .collect())
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward(&mut self, dy: &Tensor<f32>) -> Result<Tensor<f32>> {
        let tape = self
            .tape
            .take()
            .ok_or_else(|| Error::Shape("discriminator backward before forward".into()))?;
        let mut d = dy.clone();
        for k in (0..self.convs.len()).rev() {
            if k < tape.len() {
                d = activation_backward(LEAK, &tape[k], &tape[k], &d)?;
            }
            if let Some(bn) = &mut self.norms[k] {
                d = bn.backward(&d)?;
            }
            d = self.convs[k].backward(&d)?;
        }
        Ok(d)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<f32>> {
        let mut out = Vec::new();
        for (c, bn) in self.convs.iter_mut().zip(&mut self.norms) {
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

    pub(crate) fn export(&self, out: &mut TensorMap) {
        for (k, (c, bn)) in self.convs.iter().zip(&self.norms).enumerate() {
            export_layer(out, &format!("d.conv{k}"), c.params());
            if let Some(bn) = bn {
                export_bn(out, &format!("d.conv{k}.bn"), bn);
            }
        }
    }

    pub(crate) fn import(&mut self, map: &mut TensorMap) -> Result<()> {
        for (k, (c, bn)) in self.convs.iter_mut().zip(&mut self.norms).enumerate() {
            import_layer(map, &format!("d.conv{k}"), c.params_mut())?;
            if let Some(bn) = bn {
                import_bn(map, &format!("d.conv{k}.bn"), bn)?;
            }
        }
        Ok(())
    }
}

fn grid_size(image: usize) -> usize {
    let mut s = image;
    for _ in 0..3 {
        s /= 2;
    }
    s - 2
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::conv_out_dim;

    #[test]
    fn grid_sizes() {
        for (size, grid) in [(256, 30), (128, 14), (64, 6), (32, 2)] {
            let mut s = size;
            for _ in 0..3 {
                s = conv_out_dim(s, 4, 2, 1).unwrap();
            }
            s = conv_out_dim(conv_out_dim(s, 4, 1, 1).unwrap(), 4, 1, 1).unwrap();
            assert_eq!(s, grid);
            assert_eq!(grid_size(size), grid);
        }
        let d = Discriminator::new(NetConfig { image_size: 64, base_channels: 2 }, 0).unwrap();
        let y = d.infer(&Tensor::zeros([3, 2, 64, 64])).unwrap();
        assert_eq!(y.shape(), [3, 1, 6, 6]);
    }

    #[test]
    fn decision_is_grid_mean() {
        let d = Discriminator::new(NetConfig { image_size: 32, base_channels: 2 }, 1).unwrap();
        let x = Tensor::filled([1, 2, 32, 32], 0.5f32);
        let logits = d.infer(&x).unwrap();
        let mean = logits.data().iter().map(|&l| 1.0 / (1.0 + (-l).exp())).sum::<f32>() / logits.len() as f32;
        assert!((d.decision(&x).unwrap()[0] - mean).abs() < 1e-6);
    }

    #[test]
    fn input_gradient_matches_difference() {
        let mut d = Discriminator::new(NetConfig { image_size: 32, base_channels: 2 }, 3).unwrap();
        let x = Tensor::from_vec(
            [2, 2, 32, 32],
            (0..4096).map(|i| ((i * 31) % 17) as f32 / 17.0 - 0.5).collect(),
        )
        .unwrap();
        let probe = Tensor::from_vec([2, 1, 2, 2], vec![1.0, -0.5, 0.25, 0.75, -1.0, 0.5, 0.3, -0.2]).unwrap();
        let _ = d.forward(&x).unwrap();
        let dx = d.backward(&probe).unwrap();
        let dir = x.map(|v| if v > 0.0 { 1.0 } else { -1.0 });
        let analytic = dx.dot(&dir) as f64;
        let eps = 1e-3f32;
        let shifted = |s: f32| {
            let mut xp = x.clone();
            for (v, dv) in xp.data_mut().iter_mut().zip(dir.data()) {
                *v += s * dv;
            }
            d.clone().forward(&xp).unwrap().dot(&probe) as f64
        };
        let numeric = (shifted(eps) - shifted(-eps)) / (2.0 * eps as f64);
        assert!((analytic - numeric).abs() / analytic.abs().max(1e-3) < 5e-2, "{analytic} vs {numeric}");
    }
}
