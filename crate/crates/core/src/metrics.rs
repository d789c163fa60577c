//! Mel-cepstral distortion, word error rate and the evaluation report.

use std::io::Write;
use std::path::Path;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal_prep::UniformSeries;
use crate::spectral::{build_mel_filterbank, hann};

/// Segments whose MCD falls below this are reported as comprehensible.
pub const COMPREHENSIBLE_MCD: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MfccConfig {
    pub n_fft: usize,
    pub hop: usize,
    pub n_mels: usize,
    /// Cepstral order `M`; coefficient 0 is dropped.
    pub order: usize,
    /// Energy floor applied before the logarithm.
    pub floor: f64,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            n_fft: 512,
            hop: 500,
            n_mels: 40,
            order: 13,
            floor: 1e-10,
        }
    }
}

/// `frames × order` mel-cepstra, coefficients `1..=order`.
#[derive(Debug, Clone, PartialEq)]
pub struct CepstraFrameSeq {
    frames: usize,
    order: usize,
    data: Vec<f64>,
}

impl CepstraFrameSeq {
    pub fn new(frames: usize, order: usize, data: Vec<f64>) -> Result<Self> {
        if order == 0 || data.len() != frames * order {
            return Err(Error::Shape(format!(
                "{} coefficients for {frames} frames of order {order}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("cepstral coefficient".into()));
        }
        Ok(Self { frames, order, data })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.order..(t + 1) * self.order]
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.order];
        for t in 0..self.frames {
            for (a, b) in m.iter_mut().zip(self.frame(t)) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= self.frames.max(1) as f64);
        m
    }
}

/// Frame `t` covers samples `t·hop .. t·hop + n_fft` (zero beyond the end),
/// giving `len / hop` frames.
pub fn mfcc(series: &UniformSeries, cfg: &MfccConfig) -> Result<CepstraFrameSeq> {
    if cfg.order == 0 || cfg.order >= cfg.n_mels {
        return Err(Error::Parameter(format!(
            "order must lie in 1..{}, got {}",
            cfg.n_mels, cfg.order
        )));
    }
    if cfg.hop == 0 || !cfg.n_fft.is_power_of_two() {
        return Err(Error::Parameter("mfcc needs hop >= 1 and power-of-two n_fft".into()));
    }
    let x = series.values();
    let frames = x.len() / cfg.hop;
    if frames == 0 {
        return Err(Error::Input(format!(
            "{} samples give no {}-sample frame",
            x.len(),
            cfg.hop
        )));
    }
    let rate = series.rate_hz();
    let fb = build_mel_filterbank(cfg.n_mels, cfg.n_fft, rate, 0.0, rate / 2.0)?;
    let w = fb.weights();
    let window = hann(cfg.n_fft);
    let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
    let bins = cfg.n_fft / 2 + 1;
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_fft];
    let mut power = vec![0.0; bins];
    let mut logmel = vec![0.0; cfg.n_mels];
    let mut data = Vec::with_capacity(frames * cfg.order);
    let dct = dct_matrix(cfg.n_mels, cfg.order);
    for t in 0..frames {
        let start = t * cfg.hop;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = Complex64::new(x.get(start + i).copied().unwrap_or(0.0) * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for (m, l) in logmel.iter_mut().enumerate() {
            let e: f64 = (0..bins).map(|k| w[(m, k)] * power[k]).sum();
            *l = e.max(cfg.floor).ln();
        }
        for row in dct.chunks(cfg.n_mels) {
            data.push(row.iter().zip(&logmel).map(|(a, b)| a * b).sum());
        }
    }
    CepstraFrameSeq::new(frames, cfg.order, data)
}

/// Rows `1..=order` of the orthonormal DCT-II of size `n`.
fn dct_matrix(n: usize, order: usize) -> Vec<f64> {
    let scale = (2.0 / n as f64).sqrt();
    (1..=order)
        .flat_map(|k| {
            (0..n).map(move |i| {
                scale * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos()
            })
        })
        .collect()
}

/// Mean over frames of `(10 / ln 10) · √(2 Σ_m (c_r(m) − c_s(m))²)`.
pub fn mcd(reference: &CepstraFrameSeq, synthesized: &CepstraFrameSeq) -> Result<f64> {
    if reference.frames != synthesized.frames || reference.order != synthesized.order {
        return Err(Error::Shape(format!(
            "cepstra {}x{} vs {}x{}",
            reference.frames, reference.order, synthesized.frames, synthesized.order
        )));
    }
    if reference.frames == 0 {
        return Err(Error::Input("no frames to compare".into()));
    }
    let k = 10.0 / std::f64::consts::LN_10;
    let total: f64 = (0..reference.frames)
        .map(|t| {
            let d2: f64 = reference
                .frame(t)
                .iter()
                .zip(synthesized.frame(t))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            k * (2.0 * d2).sqrt()
        })
        .sum();
    Ok(total / reference.frames as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WerBreakdown {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_len: usize,
}

impl WerBreakdown {
    pub fn errors(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }

    pub fn rate(&self) -> f64 {
        self.errors() as f64 / self.reference_len as f64
    }
}

/// Lower-cased words with punctuation stripped.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Word error rate by unit-cost edit alignment.
///
/// On ties the traceback prefers a match or substitution, then a deletion,
/// then an insertion.
pub fn wer<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<WerBreakdown> {
    let n = reference.len();
    let m = hypothesis.len();
    if n == 0 {
        return Err(Error::Input("reference transcript is empty".into()));
    }
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[i - 1][j - 1] + usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            d[i][j] = sub.min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    let (mut i, mut j) = (n, m);
    let mut out = WerBreakdown {
        substitutions: 0,
        deletions: 0,
        insertions: 0,
        reference_len: n,
    };
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
                out.substitutions += usize::from(!same);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            out.deletions += 1;
            i -= 1;
        } else {
            out.insertions += 1;
            j -= 1;
        }
    }
    Ok(out)
}

/// One row of the evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub segment_id: String,
    pub mcd: f64,
    pub wer: Option<WerBreakdown>,
}

impl EvalRow {
    pub fn comprehensible(&self) -> bool {
        self.mcd < COMPREHENSIBLE_MCD
    }
}

pub const REPORT_HEADER: &str = "segment_id,mcd,comprehensible,wer,S,D,I,N";

/// CSV with one line per segment; WER columns are empty without transcripts.
pub fn write_report<W: Write>(mut w: W, rows: &[EvalRow]) -> Result<()> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in rows {
        if r.segment_id.contains([',', '\n', '"']) {
            return Err(Error::Format(format!("segment id {:?} is not CSV-safe", r.segment_id)));
        }
        write!(w, "{},{:.6},{}", r.segment_id, r.mcd, r.comprehensible())?;
        match &r.wer {
            Some(b) => writeln!(
                w,
                ",{:.6},{},{},{},{}",
                b.rate(),
                b.substitutions,
                b.deletions,
                b.insertions,
                b.reference_len
            )?,
            None => writeln!(w, ",,,,,")?,
        }
    }
    Ok(())
}

pub fn save_report(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut buf = Vec::new();
    write_report(&mut buf, rows)?;
    std::fs::write(path, buf)?;
    Ok(())
}
