use super::Matrix;
use crate::error::{Error, Result};

pub fn hz_to_mel(f_hz: f64) -> f64 {
    2595.0 * (1.0 + f_hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters, `n_mels × bins`, centers evenly spaced in mel.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Matrix,
    centers_hz: Vec<f64>,
    fmin_hz: f64,
    fmax_hz: f64,
}

/// Builds `n_mels` triangles whose centers run from `Mel(fmin)` to
/// `Mel(fmax)` inclusive; each triangle reaches its neighbours' centers.
///
/// Rows are rescaled so their largest sampled weight is exactly 1. A band
/// narrower than the bin spacing that catches no bin is given weight 1 at
/// its nearest bin.
pub fn build_mel_filterbank(
    n_mels: usize,
    n_fft: usize,
    rate_hz: f64,
    fmin_hz: f64,
    fmax_hz: f64,
) -> Result<MelFilterbank> {
    if n_mels < 2 {
        return Err(Error::Parameter("need at least 2 mel bands".into()));
    }
    if !(0.0 <= fmin_hz && fmin_hz < fmax_hz && fmax_hz <= rate_hz / 2.0 + 1e-9) {
        return Err(Error::Parameter(format!(
            "mel band [{fmin_hz}, {fmax_hz}] Hz must satisfy 0 <= fmin < fmax <= {}",
            rate_hz / 2.0
        )));
    }
    let bins = n_fft / 2 + 1;
    let mel_lo = hz_to_mel(fmin_hz);
    let step = (hz_to_mel(fmax_hz) - mel_lo) / (n_mels - 1) as f64;
    let centers_mel: Vec<f64> = (0..n_mels).map(|i| mel_lo + i as f64 * step).collect();
    let bin_mel: Vec<f64> = (0..bins)
        .map(|k| hz_to_mel(k as f64 * rate_hz / n_fft as f64))
        .collect();

    let mut weights = Matrix::zeros(n_mels, bins);
    for (i, &c) in centers_mel.iter().enumerate() {
        let (lo, hi) = (c - step, c + step);
        let mut peak = 0.0f64;
        for (k, &m) in bin_mel.iter().enumerate() {
            let w = if m <= lo || m >= hi {
                0.0
            } else if m <= c {
                (m - lo) / step
            } else {
                (hi - m) / step
            };
            weights[(i, k)] = w;
            peak = peak.max(w);
        }
        if peak > 0.0 {
            for k in 0..bins {
                weights[(i, k)] /= peak;
            }
        } else {
            let c_hz = mel_to_hz(c);
            let nearest = ((c_hz * n_fft as f64 / rate_hz).round() as usize).min(bins - 1);
            weights[(i, nearest)] = 1.0;
        }
    }
    Ok(MelFilterbank {
        weights,
        centers_hz: centers_mel.into_iter().map(mel_to_hz).collect(),
        fmin_hz,
        fmax_hz,
    })
}

impl MelFilterbank {
    pub fn n_mels(&self) -> usize {
        self.weights.rows()
    }

    pub fn bins(&self) -> usize {
        self.weights.cols()
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    pub fn fmin_hz(&self) -> f64 {
        self.fmin_hz
    }

    pub fn fmax_hz(&self) -> f64 {
        self.fmax_hz
    }

    /// Projects a `bins × frames` linear magnitude onto the mel bands.
    pub fn apply(&self, linear: &Matrix) -> Result<Matrix> {
        if linear.rows() != self.bins() {
            return Err(Error::Shape(format!(
                "magnitude has {} rows, filterbank expects {}",
                linear.rows(),
                self.bins()
            )));
        }
        Ok(self.weights.matmul(linear))
    }
}

/// Linear magnitude from mel magnitude by the minimum-norm least-squares
/// solution `Wᵀ (W Wᵀ)⁻¹ mel`, clamped at zero.
///
/// Fails when the filterbank rows are linearly dependent.
pub fn mel_to_linear(mel: &Matrix, fb: &MelFilterbank) -> Result<Matrix> {
    if mel.rows() != fb.n_mels() {
        return Err(Error::Shape(format!(
            "mel image has {} rows, filterbank has {} bands",
            mel.rows(),
            fb.n_mels()
        )));
    }
    let w = fb.weights();
    let gram = w.matmul(&w.transpose());
    let chol = cholesky(&gram).ok_or_else(|| {
        Error::Inversion(format!(
            "mel filterbank ({} x {}) is rank deficient",
            w.rows(),
            w.cols()
        ))
    })?;
    let n = gram.rows();
    let mut coeffs = Matrix::zeros(n, mel.cols());
    let mut col = vec![0.0; n];
    for t in 0..mel.cols() {
        for i in 0..n {
            col[i] = mel[(i, t)];
        }
        cholesky_solve(&chol, &mut col);
        for i in 0..n {
            coeffs[(i, t)] = col[i];
        }
    }
    let mut linear = w.transpose().matmul(&coeffs);
    linear.map_inplace(|v| v.max(0.0));
    Ok(linear)
}

/// Lower-triangular factor, or `None` if the matrix is not numerically
/// positive definite.
fn cholesky(a: &Matrix) -> Option<Matrix> {
    let n = a.rows();
    let scale = (0..n).map(|i| a[(i, i)]).fold(0.0, f64::max);
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= 1e-10 * scale {
            return None;
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Some(l)
}

fn cholesky_solve(l: &Matrix, b: &mut [f64]) {
    let n = l.rows();
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[(i, k)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[(k, i)] * b[k];
        }
        b[i] = s / l[(i, i)];
    }
}
