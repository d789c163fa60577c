use serde::{Deserialize, Serialize};

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    LeakyRelu(f64),
    Relu,
    Tanh,
    Sigmoid,
}

fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

pub fn activation_forward<T: Scalar>(kind: Activation, x: &Tensor<T>) -> Tensor<T> {
    match kind {
        Activation::LeakyRelu(slope) => {
            let s = T::from_f64(slope);
            x.map(|v| if v > T::zero() { v } else { v * s })
        }
        Activation::Relu => x.map(|v| v.max(T::zero())),
        Activation::Tanh => x.map(|v| v.tanh()),
        Activation::Sigmoid => x.map(sigmoid),
    }
}

/// Input gradient given the forward input `x` and output `y`.
pub fn activation_backward<T: Scalar>(
    kind: Activation,
    x: &Tensor<T>,
    y: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<Tensor<T>> {
    if x.shape() != dy.shape() || y.shape() != dy.shape() {
        return Err(Error::Shape("activation gradient shape".into()));
    }
    let mut dx = dy.clone();
    let it = dx.data_mut().iter_mut().zip(x.data().iter().zip(y.data()));
    match kind {
        Activation::LeakyRelu(slope) => {
            let s = T::from_f64(slope);
            it.for_each(|(d, (xv, _))| {
                if *xv <= T::zero() {
                    *d *= s
                }
            });
        }
        Activation::Relu => it.for_each(|(d, (xv, _))| {
            if *xv <= T::zero() {
                *d = T::zero()
            }
        }),
        Activation::Tanh => it.for_each(|(d, (_, yv))| *d *= T::one() - *yv * *yv),
        Activation::Sigmoid => it.for_each(|(d, (_, yv))| *d *= *yv * (T::one() - *yv)),
    }
    Ok(dx)
}
