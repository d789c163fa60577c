use super::{Scalar, Tensor};
use crate::error::{Error, Result};

fn same_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// Mean absolute error.
pub fn l1<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<T> {
    same_shape(a, b)?;
    let n = T::from_f64(a.len() as f64);
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (*x - *y).abs()).sum::<T>() / n)
}

/// Gradient of [`l1`] with respect to `a`.
pub fn l1_backward<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape(a, b)?;
    let scale = T::one() / T::from_f64(a.len() as f64);
    let mut g = a.clone();
    for (gv, bv) in g.data_mut().iter_mut().zip(b.data()) {
        let d = *gv - *bv;
        *gv = if d > T::zero() {
            scale
        } else if d < T::zero() {
            -scale
        } else {
            T::zero()
        };
    }
    Ok(g)
}

/// Mean binary cross-entropy of logits against a constant label.
pub fn bce_with_logits<T: Scalar>(logits: &Tensor<T>, label: T) -> T {
    let n = T::from_f64(logits.len() as f64);
    logits
        .data()
        .iter()
        .map(|&z| z.max(T::zero()) - z * label + (-z.abs()).exp().ln_1p())
        .sum::<T>()
        / n
}

pub fn bce_with_logits_backward<T: Scalar>(logits: &Tensor<T>, label: T) -> Tensor<T> {
    let scale = T::one() / T::from_f64(logits.len() as f64);
    logits.map(|z| (T::one() / (T::one() + (-z).exp()) - label) * scale)
}
