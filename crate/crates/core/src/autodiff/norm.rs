use super::{Param, Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    /// Normalize with the batch statistics.
    Train,
    /// Normalize with supplied running statistics.
    Eval,
}

/// What [`batch_norm_backward`] needs from the forward pass.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Tensor<T>,
    pub inv_std: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub mode: BnMode,
}

/// Per-channel normalization over (batch, height, width), then `gamma·x̂ + beta`.
///
/// In [`BnMode::Eval`] the given `stats` (mean, variance) are used instead of
/// the batch's own.
pub fn batch_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    mode: BnMode,
    stats: Option<(&[T], &[T])>,
    eps: T,
) -> Result<(Tensor<T>, BnCache<T>)> {
    let [n, c, h, w] = x.shape();
    if gamma.len() != c || beta.len() != c {
        return Err(Error::Shape(format!("batch norm over {c} channels")));
    }
    let plane = h * w;
    let count = T::from_f64((n * plane) as f64);
    let (mean, var): (Vec<T>, Vec<T>) = match (mode, stats) {
        (BnMode::Eval, Some((m, v))) => (m.to_vec(), v.to_vec()),
        (BnMode::Eval, None) => {
            return Err(Error::Shape("eval-mode batch norm needs running stats".into()))
        }
        (BnMode::Train, _) => (0..c)
            .map(|ch| {
                let vals = (0..n).flat_map(|i| x.sample(i)[ch * plane..(ch + 1) * plane].iter());
                let mean = vals.clone().copied().sum::<T>() / count;
                let var = vals.map(|&v| (v - mean) * (v - mean)).sum::<T>() / count;
                (mean, var)
            })
            .unzip(),
    };
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut xhat = x.clone();
    let mut y = x.clone();
    let sample_len = x.sample_len();
    for i in 0..n {
        for ch in 0..c {
            let range = i * sample_len + ch * plane..i * sample_len + (ch + 1) * plane;
            let (g, b) = (gamma.data()[ch], beta.data()[ch]);
            for (xh, yv) in xhat.data_mut()[range.clone()].iter_mut().zip(&mut y.data_mut()[range]) {
                *xh = (*xh - mean[ch]) * inv_std[ch];
                *yv = g * *xh + b;
            }
        }
    }
    Ok((
        y,
        BnCache {
            xhat,
            inv_std,
            mean,
            var,
            mode,
        },
    ))
}

/// Gradients `(dx, dgamma, dbeta)`.
pub fn batch_norm_backward<T: Scalar>(
    cache: &BnCache<T>,
    gamma: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let [n, c, h, w] = dy.shape();
    if dy.shape() != cache.xhat.shape() {
        return Err(Error::Shape("batch norm gradient shape".into()));
    }
    let plane = h * w;
    let sample_len = c * plane;
    let count = T::from_f64((n * plane) as f64);
    let mut dx = Tensor::zeros(dy.shape());
    let mut dgamma = Tensor::zeros([1, c, 1, 1]);
    let mut dbeta = Tensor::zeros([1, c, 1, 1]);
    for ch in 0..c {
        let ranges: Vec<_> = (0..n)
            .map(|i| i * sample_len + ch * plane..i * sample_len + (ch + 1) * plane)
            .collect();
        let mut sum_dy = T::zero();
        let mut sum_dy_xhat = T::zero();
        for r in &ranges {
            for (d, xh) in dy.data()[r.clone()].iter().zip(&cache.xhat.data()[r.clone()]) {
                sum_dy += *d;
                sum_dy_xhat += *d * *xh;
            }
        }
        dgamma.data_mut()[ch] = sum_dy_xhat;
        dbeta.data_mut()[ch] = sum_dy;
        let g = gamma.data()[ch];
        let inv = cache.inv_std[ch];
        for r in &ranges {
            for ((o, d), xh) in dx.data_mut()[r.clone()]
                .iter_mut()
                .zip(&dy.data()[r.clone()])
                .zip(&cache.xhat.data()[r.clone()])
            {
                *o = match cache.mode {
                    BnMode::Eval => g * inv * *d,
                    BnMode::Train => g * inv * (*d - sum_dy / count - *xh * sum_dy_xhat / count),
                };
            }
        }
    }
    Ok((dx, dgamma, dbeta))
}

/// Batch normalization layer with running statistics for inference.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
    cache: Option<BnCache<T>>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::filled([1, channels, 1, 1], T::one())),
            beta: Param::new(Tensor::zeros([1, channels, 1, 1])),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::from_f64(0.1),
            eps: T::from_f64(1e-5),
            cache: None,
        }
    }

    /// Training-mode forward; updates running stats and caches for backward.
    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let (y, cache) = batch_norm_forward(x, &self.gamma.value, &self.beta.value, BnMode::Train, None, self.eps)?;
        let m = self.momentum;
        for ch in 0..self.running_mean.len() {
            self.running_mean[ch] = (T::one() - m) * self.running_mean[ch] + m * cache.mean[ch];
            self.running_var[ch] = (T::one() - m) * self.running_var[ch] + m * cache.var[ch];
        }
        self.cache = Some(cache);
        Ok(y)
    }

    /// Inference with running statistics.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        batch_norm_forward(
            x,
            &self.gamma.value,
            &self.beta.value,
            BnMode::Eval,
            Some((&self.running_mean, &self.running_var)),
            self.eps,
        )
        .map(|(y, _)| y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .take()
            .ok_or_else(|| Error::Shape("batch norm backward before forward".into()))?;
        let (dx, dg, db) = batch_norm_backward(&cache, &self.gamma.value, dy)?;
        self.gamma.grad.add_assign(&dg);
        self.beta.grad.add_assign(&db);
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.gamma, &self.beta]
    }
}

#[cfg(test)]
mod tests {
    use super::super::testutil::{numeric_grad, random, rel_err};
    use super::*;

    fn ones(c: usize) -> Tensor<f64> {
        Tensor::filled([1, c, 1, 1], 1.0)
    }

    #[test]
    fn train_mode_standardizes_channels() {
        let x = random([3, 2, 4, 4], 31).map(|v| 3.0 * v + 1.5);
        let (y, _) = batch_norm_forward(&x, &ones(2), &Tensor::zeros([1, 2, 1, 1]), BnMode::Train, None, 1e-12).unwrap();
        for ch in 0..2 {
            let vals: Vec<f64> = (0..3).flat_map(|i| y.sample(i)[ch * 16..(ch + 1) * 16].to_vec()).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5 && (var - 1.0).abs() < 1e-5);
        }
        let (again, _) = batch_norm_forward(&y, &ones(2), &Tensor::zeros([1, 2, 1, 1]), BnMode::Train, None, 1e-12).unwrap();
        for (a, b) in again.data().iter().zip(y.data()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        let x = random([2, 2, 3, 3], 32);
        let gamma = random([1, 2, 1, 1], 33);
        let beta = random([1, 2, 1, 1], 34);
        let proj = random([2, 2, 3, 3], 35);
        let loss = |x: &Tensor<f64>, g: &Tensor<f64>, b: &Tensor<f64>| {
            batch_norm_forward(x, g, b, BnMode::Train, None, 1e-5).unwrap().0.dot(&proj)
        };
        let (_, cache) = batch_norm_forward(&x, &gamma, &beta, BnMode::Train, None, 1e-5).unwrap();
        let (dx, dg, db) = batch_norm_backward(&cache, &gamma, &proj).unwrap();
        assert!(rel_err(dx.data(), &numeric_grad(&x, |v| loss(v, &gamma, &beta))) < 1e-4);
        assert!(rel_err(dg.data(), &numeric_grad(&gamma, |v| loss(&x, v, &beta))) < 1e-4);
        assert!(rel_err(db.data(), &numeric_grad(&beta, |v| loss(&x, &gamma, v))) < 1e-4);
    }

    #[test]
    fn running_stats_track_batches() {
        let mut bn = BatchNorm2d::<f64>::new(1);
        let x = Tensor::from_vec([1, 1, 1, 4], vec![1.0, 3.0, 1.0, 3.0]).unwrap();
        for _ in 0..200 {
            bn.forward(&x).unwrap();
        }
        assert!((bn.running_mean[0] - 2.0).abs() < 1e-6);
        assert!((bn.running_var[0] - 1.0).abs() < 1e-6);
        let y = bn.infer(&x).unwrap();
        assert!((y.data()[0] + 1.0).abs() < 1e-4);
    }
}
