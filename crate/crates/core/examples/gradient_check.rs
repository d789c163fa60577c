//! Compare analytic gradients of a convolution and a batch norm against
//! central finite differences in f64.
//!
//!     cargo run --example gradient_check

use accear::autodiff::{
    batch_norm_backward, batch_norm_forward, conv2d_backward, conv2d_forward, BnMode, Tensor,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-8))
        .fold(0.0, f64::max)
}

fn numeric(x: &Tensor<f64>, f: impl Fn(&Tensor<f64>) -> f64) -> Vec<f64> {
    let h = 1e-6;
    (0..x.len())
        .map(|i| {
            let (mut p, mut m) = (x.clone(), x.clone());
            p.data_mut()[i] += h;
            m.data_mut()[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

fn main() -> accear::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random([2, 2, 5, 5], &mut rng);
    let w = random([3, 2, 3, 3], &mut rng);
    let b = random([1, 3, 1, 1], &mut rng);
    let probe = random([2, 3, 3, 3], &mut rng);

    // Scalar objective: <conv(x), probe>.
    let loss = |x: &Tensor<f64>, w: &Tensor<f64>| conv2d_forward(x, w, &b, 2, 1).unwrap().dot(&probe);
    let (dx, dw, _) = conv2d_backward(&x, &w, 2, 1, &probe)?;
    println!("conv2d  dx rel err {:.2e}", max_rel(dx.data(), &numeric(&x, |v| loss(v, &w))));
    println!("conv2d  dw rel err {:.2e}", max_rel(dw.data(), &numeric(&w, |v| loss(&x, v))));

    let gamma = random([1, 2, 1, 1], &mut rng);
    let beta = random([1, 2, 1, 1], &mut rng);
    let probe = random([2, 2, 5, 5], &mut rng);
    let bn = |x: &Tensor<f64>| {
        let (y, _) = batch_norm_forward(x, &gamma, &beta, BnMode::Train, None, 1e-5).unwrap();
        y.dot(&probe)
    };
    let (_, cache) = batch_norm_forward(&x, &gamma, &beta, BnMode::Train, None, 1e-5)?;
    let (dx, _, _) = batch_norm_backward(&cache, &gamma, &probe)?;
    println!("batchnorm dx rel err {:.2e}", max_rel(dx.data(), &numeric(&x, bn)));
    Ok(())
}
