use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use super::{Param, Scalar, Tensor};
use crate::error::{Error, Result};

pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 {
        return None;
    }
    (input + 2 * pad).checked_sub(kernel).map(|v| v / stride + 1)
}

pub fn conv_transpose_out_dim(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if input == 0 || stride == 0 {
        return None;
    }
    ((input - 1) * stride + kernel).checked_sub(2 * pad).filter(|&v| v > 0)
}

/// Geometry of a strided convolution from a `c × h × w` image.
#[derive(Debug, Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
}

impl Geom {
    fn patch(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn out_plane(&self) -> usize {
        self.oh * self.ow
    }

    /// Unrolls receptive fields into a `patch × out_plane` matrix.
    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let plane = self.out_plane();
        for c in 0..self.c {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = ((c * self.kh + i) * self.kw + j) * plane;
                    for oy in 0..self.oh {
                        let y = (oy * self.stride + i) as isize - self.pad as isize;
                        let dst = &mut cols[row + oy * self.ow..row + (oy + 1) * self.ow];
                        if y < 0 || y >= self.h as isize {
                            dst.fill(T::zero());
                            continue;
                        }
                        let src = &x[(c * self.h + y as usize) * self.w..][..self.w];
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let xx = (ox * self.stride + j) as isize - self.pad as isize;
                            *d = if xx < 0 || xx >= self.w as isize {
                                T::zero()
                            } else {
                                src[xx as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`Geom::im2col`]: scatter-adds columns back into the image.
    fn col2im<T: Scalar>(&self, cols: &[T], x: &mut [T]) {
        let plane = self.out_plane();
        for c in 0..self.c {
            for i in 0..self.kh {
                for j in 0..self.kw {
                    let row = ((c * self.kh + i) * self.kw + j) * plane;
                    for oy in 0..self.oh {
                        let y = (oy * self.stride + i) as isize - self.pad as isize;
                        if y < 0 || y >= self.h as isize {
                            continue;
                        }
                        let dst = &mut x[(c * self.h + y as usize) * self.w..][..self.w];
                        let src = &cols[row + oy * self.ow..row + (oy + 1) * self.ow];
                        for (ox, s) in src.iter().enumerate() {
                            let xx = (ox * self.stride + j) as isize - self.pad as isize;
                            if xx >= 0 && xx < self.w as isize {
                                dst[xx as usize] += *s;
                            }
                        }
                    }
                }
            }
        }
    }
}

fn conv_geom<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> Result<Geom> {
    let [_, c, h, wd] = x.shape();
    let [_, wc, kh, kw] = w.shape();
    if wc != c {
        return Err(Error::Shape(format!(
            "conv weight expects {wc} input channels, got {c}"
        )));
    }
    let oh = conv_out_dim(h, kh, stride, pad);
    let ow = conv_out_dim(wd, kw, stride, pad);
    match (oh, ow) {
        (Some(oh), Some(ow)) => Ok(Geom {
            c,
            h,
            w: wd,
            kh,
            kw,
            stride,
            pad,
            oh,
            ow,
        }),
        _ => Err(Error::Shape(format!(
            "input {h}x{wd} with pad {pad} smaller than kernel {kh}x{kw}"
        ))),
    }
}

fn check_bias<T: Scalar>(b: &Tensor<T>, channels: usize) -> Result<()> {
    if b.len() != channels {
        return Err(Error::Shape(format!(
            "bias has {} entries for {channels} channels",
            b.len()
        )));
    }
    Ok(())
}

/// `y = w ⋆ x + b` with `w` shaped (out, in, kh, kw).
pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = conv_geom(x, w, stride, pad)?;
    let out_c = w.batch();
    check_bias(b, out_c)?;
    let plane = g.out_plane();
    let mut y = Tensor::zeros([x.batch(), out_c, g.oh, g.ow]);
    y.data_mut()
        .par_chunks_mut(out_c * plane)
        .enumerate()
        .for_each(|(i, ys)| {
            let mut cols = vec![T::zero(); g.patch() * plane];
            g.im2col(x.sample(i), &mut cols);
            for (o, chunk) in ys.chunks_mut(plane).enumerate() {
                chunk.fill(b.data()[o]);
            }
            T::gemm(false, false, out_c, plane, g.patch(), T::one(), w.data(), &cols, T::one(), ys);
        });
    Ok(y)
}

/// Gradients `(dx, dw, db)` of [`conv2d_forward`].
pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let g = conv_geom(x, w, stride, pad)?;
    let out_c = w.batch();
    if dy.shape() != [x.batch(), out_c, g.oh, g.ow] {
        return Err(Error::Shape(format!("conv output gradient {:?}", dy.shape())));
    }
    let plane = g.out_plane();
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros([1, out_c, 1, 1]);
    let mut cols = vec![T::zero(); g.patch() * plane];
    let sample_len = x.sample_len();
    for i in 0..x.batch() {
        let dys = dy.sample(i);
        g.im2col(x.sample(i), &mut cols);
        T::gemm(false, true, out_c, g.patch(), plane, T::one(), dys, &cols, T::one(), dw.data_mut());
        for (o, chunk) in dys.chunks(plane).enumerate() {
            db.data_mut()[o] += chunk.iter().copied().sum();
        }
        T::gemm(true, false, g.patch(), plane, out_c, T::one(), w.data(), dys, T::zero(), &mut cols);
        g.col2im(&cols, &mut dx.data_mut()[i * sample_len..(i + 1) * sample_len]);
    }
    Ok((dx, dw, db))
}

/// Geometry of the convolution whose adjoint is the transposed convolution.
fn transpose_geom<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, stride: usize, pad: usize) -> Result<Geom> {
    let [_, c, h, wd] = x.shape();
    let [wc, out_c, kh, kw] = w.shape();
    if wc != c {
        return Err(Error::Shape(format!(
            "transposed conv weight expects {wc} input channels, got {c}"
        )));
    }
    let oh = conv_transpose_out_dim(h, kh, stride, pad);
    let ow = conv_transpose_out_dim(wd, kw, stride, pad);
    match (oh, ow) {
        (Some(oh), Some(ow)) => Ok(Geom {
            c: out_c,
            h: oh,
            w: ow,
            kh,
            kw,
            stride,
            pad,
            oh: h,
            ow: wd,
        }),
        _ => Err(Error::Shape(format!(
            "transposed conv of {h}x{wd} with pad {pad} has no output"
        ))),
    }
}

/// Transposed convolution with `w` shaped (in, out, kh, kw); the adjoint of
/// [`conv2d_forward`] for the same weight tensor.
pub fn conv2d_transpose_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
    pad: usize,
) -> Result<Tensor<T>> {
    let g = transpose_geom(x, w, stride, pad)?;
    let in_c = x.channels();
    let out_c = g.c;
    check_bias(b, out_c)?;
    let in_plane = g.out_plane();
    let out_plane = g.h * g.w;
    let mut y = Tensor::zeros([x.batch(), out_c, g.h, g.w]);
    y.data_mut()
        .par_chunks_mut(out_c * out_plane)
        .enumerate()
        .for_each(|(i, ys)| {
            let mut cols = vec![T::zero(); g.patch() * in_plane];
            T::gemm(true, false, g.patch(), in_plane, in_c, T::one(), w.data(), x.sample(i), T::zero(), &mut cols);
            for (o, chunk) in ys.chunks_mut(out_plane).enumerate() {
                chunk.fill(b.data()[o]);
            }
            g.col2im(&cols, ys);
        });
    Ok(y)
}

/// Gradients `(dx, dw, db)` of [`conv2d_transpose_forward`].
pub fn conv2d_transpose_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    stride: usize,
    pad: usize,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let g = transpose_geom(x, w, stride, pad)?;
    let in_c = x.channels();
    let out_c = g.c;
    if dy.shape() != [x.batch(), out_c, g.h, g.w] {
        return Err(Error::Shape(format!(
            "transposed conv output gradient {:?}",
            dy.shape()
        )));
    }
    let in_plane = g.out_plane();
    let out_plane = g.h * g.w;
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros([1, out_c, 1, 1]);
    let mut cols = vec![T::zero(); g.patch() * in_plane];
    let sample_len = x.sample_len();
    for i in 0..x.batch() {
        let dys = dy.sample(i);
        for (o, chunk) in dys.chunks(out_plane).enumerate() {
            db.data_mut()[o] += chunk.iter().copied().sum();
        }
        g.im2col(dys, &mut cols);
        T::gemm(false, true, in_c, g.patch(), in_plane, T::one(), x.sample(i), &cols, T::one(), dw.data_mut());
        T::gemm(
            false,
            false,
            in_c,
            in_plane,
            g.patch(),
            T::one(),
            w.data(),
            &cols,
            T::zero(),
            &mut dx.data_mut()[i * sample_len..(i + 1) * sample_len],
        );
    }
    Ok((dx, dw, db))
}

fn init_weight<T: Scalar, R: Rng>(shape: [usize; 4], rng: &mut R) -> Tensor<T> {
    let normal = Normal::new(0.0, 0.02).expect("valid std");
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| T::from_f64(normal.sample(rng))).collect())
        .expect("shape matches")
}

/// Convolution layer; weights drawn from N(0, 0.02²), zero bias.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub pad: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng>(in_c: usize, out_c: usize, kernel: usize, stride: usize, pad: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::new(init_weight([out_c, in_c, kernel, kernel], rng)),
            bias: Param::new(Tensor::zeros([1, out_c, 1, 1])),
            stride,
            pad,
            input: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.batch()
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = conv2d_forward(x, &self.weight.value, &self.bias.value, self.stride, self.pad)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    /// Forward pass without caching, for inference.
    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_forward(x, &self.weight.value, &self.bias.value, self.stride, self.pad)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::Shape("conv backward before forward".into()))?;
        let (dx, dw, db) = conv2d_backward(&x, &self.weight.value, self.stride, self.pad, dy)?;
        self.weight.grad.add_assign(&dw);
        self.bias.grad.add_assign(&db);
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }
}

/// Transposed convolution layer (upsampling).
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub pad: usize,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new<R: Rng>(in_c: usize, out_c: usize, kernel: usize, stride: usize, pad: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::new(init_weight([in_c, out_c, kernel, kernel], rng)),
            bias: Param::new(Tensor::zeros([1, out_c, 1, 1])),
            stride,
            pad,
            input: None,
        }
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.channels()
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.infer(x)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn infer(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        conv2d_transpose_forward(x, &self.weight.value, &self.bias.value, self.stride, self.pad)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::Shape("transposed conv backward before forward".into()))?;
        let (dx, dw, db) =
            conv2d_transpose_backward(&x, &self.weight.value, self.stride, self.pad, dy)?;
        self.weight.grad.add_assign(&dw);
        self.bias.grad.add_assign(&db);
        Ok(dx)
    }

    pub fn params_mut(&mut self) -> [&mut Param<T>; 2] {
        [&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> [&Param<T>; 2] {
        [&self.weight, &self.bias]
    }
}
