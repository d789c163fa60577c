//! Time-frequency representations.
//!
//! The accelerometer condition is a square-root-compressed linear-Hz
//! spectrogram; the audio target is a log1p-compressed mel spectrogram.
//! Both are normalized into `[0, 1]` with dataset-level stats and fitted to
//! a square image whose columns share one time grid.

mod features;
mod image;
mod mel;
mod stft;

use std::ops::{Index, IndexMut};

pub use features::{audio_to_mel, SpectralConfig};
pub use image::{
    compress_and_normalize, read_raw, Compression, FreqAxis, NormStats, SpectroImage,
};
pub use mel::{build_mel_filterbank, hz_to_mel, mel_to_hz, mel_to_linear, MelFilterbank};
pub use stft::{hann, istft, stft, ComplexSpectrogram, StftPlan};

/// Dense row-major real matrix (rows = frequency, cols = frames).
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> crate::Result<Self> {
        if data.len() != rows * cols {
            return Err(crate::Error::Shape(format!(
                "{} values for a {rows} x {cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn map_inplace(&mut self, f: impl Fn(f64) -> f64) {
        self.data.iter_mut().for_each(|v| *v = f(*v));
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t[(c, r)] = self[(r, c)];
            }
        }
        t
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        assert_eq!(self.cols, rhs.rows, "matmul inner dimension");
        let mut out = Matrix::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            let row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rrow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, b) in row.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// Linear resampling along the row axis so the first and last rows map
    /// onto each other.
    pub fn resample_rows(&self, rows: usize) -> Matrix {
        if rows == self.rows {
            return self.clone();
        }
        let mut out = Matrix::zeros(rows, self.cols);
        for r in 0..rows {
            let pos = if rows == 1 {
                0.0
            } else {
                r as f64 * (self.rows - 1) as f64 / (rows - 1) as f64
            };
            let lo = (pos.floor() as usize).min(self.rows - 1);
            let hi = (lo + 1).min(self.rows - 1);
            let frac = pos - lo as f64;
            for c in 0..self.cols {
                out[(r, c)] = self[(lo, c)] * (1.0 - frac) + self[(hi, c)] * frac;
            }
        }
        out
    }

    /// Center-crops or zero-pads columns to `cols`. Returns the matrix and
    /// the source column of output column 0 (negative when padded).
    pub fn fit_cols(&self, cols: usize) -> (Matrix, isize) {
        let offset = (self.cols as isize - cols as isize).div_euclid(2);
        let mut out = Matrix::zeros(self.rows, cols);
        for c in 0..cols {
            let src = c as isize + offset;
            if src < 0 || src >= self.cols as isize {
                continue;
            }
            for r in 0..self.rows {
                out[(r, c)] = self[(r, src as usize)];
            }
        }
        (out, offset)
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }
}
