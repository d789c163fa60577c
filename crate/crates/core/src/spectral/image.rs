use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Compression {
    Sqrt,
    Log1p,
}

impl Compression {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Compression::Sqrt => v.max(0.0).sqrt(),
            Compression::Log1p => v.max(0.0).ln_1p(),
        }
    }

    pub fn invert(self, v: f64) -> f64 {
        match self {
            Compression::Sqrt => v * v,
            Compression::Log1p => v.exp_m1(),
        }
    }
}

/// Affine range of compressed values mapped onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: f64,
    pub max: f64,
}

impl NormStats {
    /// Range over every entry of the given matrices.
    pub fn from_matrices<'a>(matrices: impl IntoIterator<Item = &'a Matrix>) -> Option<Self> {
        let mut stats: Option<NormStats> = None;
        for m in matrices {
            for &v in m.as_slice() {
                stats = Some(match stats {
                    None => NormStats { min: v, max: v },
                    Some(s) => NormStats {
                        min: s.min.min(v),
                        max: s.max.max(v),
                    },
                });
            }
        }
        stats
    }

    pub fn merge(self, other: NormStats) -> NormStats {
        NormStats {
            min: self.min.min(other.min),
            max: self.max.max(other.max),
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.max > self.min) {
            return Err(Error::DegenerateStats(self.min));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FreqAxis {
    Linear { hz_per_row: f64 },
    Mel { fmin_hz: f64, fmax_hz: f64 },
}

/// Normalized non-negative spectrogram image, row 0 = lowest frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectroImage {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    pub compression: Compression,
    pub stats: NormStats,
    pub axis: FreqAxis,
    pub seconds_per_col: f64,
}

/// Entrywise compression followed by affine scaling into `[0, 1]`.
///
/// Values beyond the stats range are clamped. With `size`, rows are
/// linearly resampled and columns center-cropped (or zero-padded).
pub fn compress_and_normalize(
    mag: &Matrix,
    stats: NormStats,
    compression: Compression,
    size: Option<usize>,
) -> Result<Matrix> {
    if mag.as_slice().iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::Input("magnitudes must be finite and non-negative".into()));
    }
    stats.check()?;
    let mut m = mag.clone();
    m.map_inplace(|v| compression.apply(v));
    if let Some(size) = size {
        m = m.resample_rows(size).fit_cols(size).0;
    }
    let span = stats.max - stats.min;
    m.map_inplace(|v| ((v - stats.min) / span).clamp(0.0, 1.0));
    Ok(m)
}

impl SpectroImage {
    pub fn new(
        rows: usize,
        cols: usize,
        data: Vec<f32>,
        compression: Compression,
        stats: NormStats,
        axis: FreqAxis,
        seconds_per_col: f64,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} pixels for a {rows} x {cols} image",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            compression,
            stats,
            axis,
            seconds_per_col,
        })
    }

    /// Image from a matrix already normalized into `[0, 1]`.
    pub fn from_normalized(
        m: &Matrix,
        compression: Compression,
        stats: NormStats,
        axis: FreqAxis,
        seconds_per_col: f64,
    ) -> Result<Self> {
        let data = m.as_slice().iter().map(|&v| v as f32).collect();
        Self::new(m.rows(), m.cols(), data, compression, stats, axis, seconds_per_col)
    }

    /// Same metadata, new pixels.
    pub fn with_pixels(&self, data: Vec<f32>) -> Result<Self> {
        Self::new(
            self.rows,
            self.cols,
            data,
            self.compression,
            self.stats,
            self.axis,
            self.seconds_per_col,
        )
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixels(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.cols + col]
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_vec(
            self.rows,
            self.cols,
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .expect("image shape is consistent")
    }

    /// Undo normalization and compression, yielding magnitudes.
    pub fn denormalize(&self) -> Matrix {
        let span = self.stats.max - self.stats.min;
        let mut m = self.to_matrix();
        let c = self.compression;
        let min = self.stats.min;
        m.map_inplace(|v| c.invert(min + v * span).max(0.0));
        m
    }

    /// Mean absolute pixel difference.
    pub fn l1_distance(&self, other: &SpectroImage) -> Result<f64> {
        if (self.rows, self.cols) != (other.rows, other.cols) {
            return Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let sum: f64 = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (*a as f64 - *b as f64).abs())
            .sum();
        Ok(sum / self.data.len() as f64)
    }

    /// Catmull-Rom bicubic resampling of the pixel grid, clamped to `[0, 1]`.
    pub fn resize_bicubic(&self, rows: usize, cols: usize) -> Vec<f32> {
        if (rows, cols) == (self.rows, self.cols) {
            return self.data.clone();
        }
        let tmp = resample_axis(&self.data, self.rows, self.cols, cols, false);
        let out = resample_axis(&tmp, self.rows, cols, rows, true);
        out.into_iter().map(|v| v.clamp(0.0, 1.0)).collect()
    }

    /// 8-bit grayscale PNG with the lowest frequency at the bottom.
    pub fn write_png<W: Write>(&self, w: W) -> Result<()> {
        let mut enc = png::Encoder::new(w, self.cols as u32, self.rows as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(format!("png: {e}")))?;
        let mut buf = Vec::with_capacity(self.rows * self.cols);
        for r in (0..self.rows).rev() {
            for c in 0..self.cols {
                buf.push((self.get(r, c).clamp(0.0, 1.0) * 255.0).round() as u8);
            }
        }
        writer
            .write_image_data(&buf)
            .map_err(|e| Error::Format(format!("png: {e}")))?;
        Ok(())
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.write_png(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Raw matrix: `ASPC`, version, rows, cols (u32 LE) then f32 LE pixels.
    pub fn write_raw<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(ASPC_MAGIC)?;
        w.write_all(&ASPC_VERSION.to_le_bytes())?;
        w.write_all(&(self.rows as u32).to_le_bytes())?;
        w.write_all(&(self.cols as u32).to_le_bytes())?;
        for v in &self.data {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn save_raw(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_raw(&mut w)?;
        w.flush()?;
        Ok(())
    }
}

pub const ASPC_MAGIC: &[u8; 4] = b"ASPC";
pub const ASPC_VERSION: u32 = 1;

/// Reads the pixel grid of a raw `ASPC` file.
pub fn read_raw<R: Read>(mut r: R) -> Result<(usize, usize, Vec<f32>)> {
    let mut header = [0u8; 16];
    r.read_exact(&mut header)?;
    if &header[..4] != ASPC_MAGIC {
        return Err(Error::Format("missing ASPC magic".into()));
    }
    let word = |i: usize| u32::from_le_bytes(header[i..i + 4].try_into().unwrap());
    if word(4) != ASPC_VERSION {
        return Err(Error::Format(format!("unsupported ASPC version {}", word(4))));
    }
    let (rows, cols) = (word(8) as usize, word(12) as usize);
    let mut bytes = vec![0u8; rows * cols * 4];
    r.read_exact(&mut bytes)?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, data))
}

fn cubic_weights(t: f32) -> [f32; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ]
}

/// Resamples one axis of a row-major grid (`rows` × `cols`) to `new_len`
/// using pixel-center alignment.
fn resample_axis(data: &[f32], rows: usize, cols: usize, new_len: usize, along_rows: bool) -> Vec<f32> {
    let old_len = if along_rows { rows } else { cols };
    let (out_rows, out_cols) = if along_rows { (new_len, cols) } else { (rows, new_len) };
    let mut out = vec![0.0f32; out_rows * out_cols];
    let scale = old_len as f32 / new_len as f32;
    for i in 0..new_len {
        let src = (i as f32 + 0.5) * scale - 0.5;
        let base = src.floor();
        let w = cubic_weights(src - base);
        let taps: [usize; 4] = std::array::from_fn(|k| {
            (base as isize - 1 + k as isize).clamp(0, old_len as isize - 1) as usize
        });
        let lanes = if along_rows { cols } else { rows };
        for l in 0..lanes {
            let mut acc = 0.0;
            for k in 0..4 {
                let v = if along_rows {
                    data[taps[k] * cols + l]
                } else {
                    data[l * cols + taps[k]]
                };
                acc += w[k] * v;
            }
            if along_rows {
                out[i * out_cols + l] = acc;
            } else {
                out[l * out_cols + i] = acc;
            }
        }
    }
    out
}
