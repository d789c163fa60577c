use serde::{Deserialize, Serialize};

use super::{Param, Scalar, Tensor};

/// Applies one update to each parameter from its accumulated gradient.
///
/// Parameters must be passed in the same order on every call; stateful
/// optimizers key their moment buffers by position.
pub trait Optimizer<T: Scalar> {
    fn step(&mut self, params: &mut [&mut Param<T>]);
}

/// Plain gradient descent.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
}

impl<T: Scalar> Optimizer<T> for Sgd {
    fn step(&mut self, params: &mut [&mut Param<T>]) {
        let lr = T::from_f64(self.lr);
        for p in params.iter_mut() {
            let Param { value, grad } = &mut **p;
            for (v, g) in value.data_mut().iter_mut().zip(grad.data()) {
                *v -= lr * *g;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    t: i32,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> i32 {
        self.t
    }

    /// Step counter and the first and second moment buffers.
    pub fn state(&self) -> (i32, &[Tensor<T>], &[Tensor<T>]) {
        (self.t, &self.m, &self.v)
    }

    pub fn set_state(&mut self, t: i32, m: Vec<Tensor<T>>, v: Vec<Tensor<T>>) {
        self.t = t;
        self.m = m;
        self.v = v;
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, params: &mut [&mut Param<T>]) {
        if self.m.len() != params.len() {
            self.m = params.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
            self.v = self.m.clone();
            self.t = 0;
        }
        self.t += 1;
        let c = self.config;
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let one = T::one();
        let corr1 = T::from_f64(1.0 - c.beta1.powi(self.t));
        let corr2 = T::from_f64(1.0 - c.beta2.powi(self.t));
        let lr = T::from_f64(c.lr);
        let eps = T::from_f64(c.eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let Param { value, grad } = &mut **p;
            for (((x, g), mi), vi) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mi = b1 * *mi + (one - b1) * *g;
                *vi = b2 * *vi + (one - b2) * *g * *g;
                let m_hat = *mi / corr1;
                let v_hat = *vi / corr2;
                *x -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
