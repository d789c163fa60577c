//! Accelerometer trace conditioning.
//!
//! Raw sensor logs arrive as jittery, timestamped 3-axis samples with a
//! gravity baseline on one axis. The functions here turn them into
//! fixed-rate, fixed-length single-axis segments:
//!
//! normalize → select axis → interpolate to a uniform grid → high-pass → segment
//!
//! Every operation is a pure function over its inputs.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Timestamped 3-axis acceleration samples (m/s²).
#[derive(Debug, Clone, PartialEq)]
pub struct RawAccelTrace {
    timestamps_ns: Vec<i64>,
    samples: Vec<[f64; 3]>,
}

impl RawAccelTrace {
    pub fn new(timestamps_ns: Vec<i64>, samples: Vec<[f64; 3]>) -> Result<Self> {
        if timestamps_ns.len() != samples.len() {
            return Err(Error::Input(format!(
                "{} timestamps but {} samples",
                timestamps_ns.len(),
                samples.len()
            )));
        }
        if timestamps_ns.len() < 2 {
            return Err(Error::Input("trace needs at least 2 samples".into()));
        }
        if let Some(i) = timestamps_ns.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Input(format!(
                "timestamps not strictly increasing at sample {}",
                i + 1
            )));
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite acceleration sample".into()));
        }
        Ok(Self {
            timestamps_ns,
            samples,
        })
    }

    pub fn timestamps_ns(&self) -> &[i64] {
        &self.timestamps_ns
    }

    pub fn samples(&self) -> &[[f64; 3]] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn axis_values(&self, axis: Axis) -> Vec<f64> {
        let i = axis.index();
        self.samples.iter().map(|s| s[i]).collect()
    }

    pub fn duration_s(&self) -> f64 {
        (self.timestamps_ns[self.len() - 1] - self.timestamps_ns[0]) as f64 * 1e-9
    }

    /// Parses the `t_ns,ax,ay,az` CSV format.
    pub fn read_csv<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let parse_err = |line: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut lines = BufReader::new(reader).lines();
        let header = match lines.next() {
            Some(h) => h?,
            None => return Err(parse_err(1, "empty file".into())),
        };
        if header.trim() != "t_ns,ax,ay,az" {
            return Err(parse_err(
                1,
                format!("expected header `t_ns,ax,ay,az`, found `{}`", header.trim()),
            ));
        }
        let mut timestamps = Vec::new();
        let mut samples = Vec::new();
        for (idx, line) in lines.enumerate() {
            let line_no = idx + 2;
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 4 {
                return Err(parse_err(
                    line_no,
                    format!("expected 4 fields, found {}", fields.len()),
                ));
            }
            let t: i64 = fields[0]
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad timestamp `{}`", fields[0])))?;
            let mut s = [0.0f64; 3];
            for (k, f) in fields[1..].iter().enumerate() {
                s[k] = f
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("bad acceleration `{f}`")))?;
                if !s[k].is_finite() {
                    return Err(parse_err(line_no, format!("non-finite acceleration `{f}`")));
                }
            }
            if let Some(&prev) = timestamps.last() {
                if t <= prev {
                    return Err(parse_err(
                        line_no,
                        format!("timestamp {t} does not increase (previous {prev})"),
                    ));
                }
            }
            timestamps.push(t);
            samples.push(s);
        }
        Self::new(timestamps, samples).map_err(|e| parse_err(0, e.to_string()))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(file, path)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t_ns,ax,ay,az")?;
        for (t, s) in self.timestamps_ns.iter().zip(&self.samples) {
            writeln!(w, "{t},{},{},{}", s[0], s[1], s[2])?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(file)
    }
}

/// Single-axis samples on a uniform time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSeries {
    rate_hz: f64,
    values: Vec<f64>,
}

impl UniformSeries {
    pub fn new(rate_hz: f64, values: Vec<f64>) -> Result<Self> {
        if !(rate_hz > 0.0 && rate_hz.is_finite()) {
            return Err(Error::Parameter(format!("sample rate {rate_hz} must be > 0")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("series contains non-finite samples".into()));
        }
        Ok(Self { rate_hz, values })
    }

    pub fn rate_hz(&self) -> f64 {
        self.rate_hz
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.rate_hz
    }
}

/// A fixed-length window cut from a [`UniformSeries`].
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub values: Vec<f64>,
    pub duration_s: f64,
    /// Index of the first sample in the parent series.
    pub source_offset: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    #[default]
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x" => Ok(Axis::X),
            "y" => Ok(Axis::Y),
            "z" => Ok(Axis::Z),
            other => Err(Error::Parameter(format!("unknown axis `{other}`"))),
        }
    }
}

/// Mean and population standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-axis z-scoring with the population standard deviation. A constant
/// axis maps to zeros.
pub fn zero_mean_normalize(trace: &RawAccelTrace) -> RawAccelTrace {
    let mut samples = trace.samples.clone();
    for axis in 0..3 {
        let column: Vec<f64> = trace.samples.iter().map(|s| s[axis]).collect();
        let (mean, std) = mean_std(&column);
        for s in samples.iter_mut() {
            s[axis] = if std > 0.0 { (s[axis] - mean) / std } else { 0.0 };
        }
    }
    RawAccelTrace {
        timestamps_ns: trace.timestamps_ns.clone(),
        samples,
    }
}

pub fn select_axis(trace: &RawAccelTrace, axis: Axis) -> (Vec<i64>, Vec<f64>) {
    (trace.timestamps_ns.clone(), trace.axis_values(axis))
}

/// Transposed direct-form II biquad.
#[derive(Debug, Clone, Copy)]
struct Biquad {
    b: [f64; 3],
    a: [f64; 2],
}

impl Biquad {
    /// Bilinear-transform high-pass section with prewarped corner.
    fn high_pass(cutoff_hz: f64, rate_hz: f64, q: f64) -> Self {
        let w0 = 2.0 * std::f64::consts::PI * cutoff_hz / rate_hz;
        let (sin, cos) = w0.sin_cos();
        let alpha = sin / (2.0 * q);
        let a0 = 1.0 + alpha;
        let b0 = (1.0 + cos) / 2.0 / a0;
        Biquad {
            b: [b0, -(1.0 + cos) / a0, b0],
            a: [-2.0 * cos / a0, (1.0 - alpha) / a0],
        }
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (1.0 + self.a[0] + self.a[1])
    }

    /// Filters in place starting from the steady state for a constant input `x0`.
    fn run(&self, data: &mut [f64], x0: f64) {
        let y0 = self.dc_gain() * x0;
        let mut z2 = self.b[2] * x0 - self.a[1] * y0;
        let mut z1 = y0 - self.b[0] * x0;
        for v in data.iter_mut() {
            let x = *v;
            let y = self.b[0] * x + z1;
            z1 = self.b[1] * x - self.a[0] * y + z2;
            z2 = self.b[2] * x - self.a[1] * y;
            *v = y;
        }
    }
}

fn butterworth_high_pass(cutoff_hz: f64, rate_hz: f64) -> [Biquad; 2] {
    // Pole-pair quality factors of a 4th-order Butterworth prototype.
    let q1 = 1.0 / (2.0 * (std::f64::consts::PI / 8.0).cos());
    let q2 = 1.0 / (2.0 * (3.0 * std::f64::consts::PI / 8.0).cos());
    [
        Biquad::high_pass(cutoff_hz, rate_hz, q1),
        Biquad::high_pass(cutoff_hz, rate_hz, q2),
    ]
}

fn run_cascade(sections: &[Biquad], data: &mut [f64]) {
    let mut x0 = data.first().copied().unwrap_or(0.0);
    for s in sections {
        s.run(data, x0);
        x0 *= s.dc_gain();
    }
}

/// Zero-phase 4th-order Butterworth high-pass (forward-backward).
///
/// Edges are extended by odd reflection and each pass starts from the
/// steady state of its first sample, which keeps the filter linear.
pub fn high_pass(series: &UniformSeries, cutoff_hz: f64) -> Result<UniformSeries> {
    let nyquist = series.rate_hz / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist) {
        return Err(Error::Parameter(format!(
            "high-pass cutoff {cutoff_hz} Hz outside (0, {nyquist}) Hz"
        )));
    }
    let n = series.values.len();
    if n < 2 {
        return Ok(series.clone());
    }
    let sections = butterworth_high_pass(cutoff_hz, series.rate_hz);
    let pad = ((3.0 * series.rate_hz / cutoff_hz).ceil() as usize).min(n - 1);
    let x = &series.values;
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    run_cascade(&sections, &mut ext);
    ext.reverse();
    run_cascade(&sections, &mut ext);
    ext.reverse();

    UniformSeries::new(series.rate_hz, ext[pad..pad + n].to_vec())
}

/// Linear interpolation onto a uniform grid anchored at the first timestamp.
///
/// The grid stops at the last sample that does not exceed the final
/// timestamp, so nothing is extrapolated.
pub fn interpolate_uniform(
    timestamps_ns: &[i64],
    values: &[f64],
    target_rate_hz: f64,
) -> Result<UniformSeries> {
    if timestamps_ns.len() != values.len() {
        return Err(Error::Input("timestamp/value length mismatch".into()));
    }
    if timestamps_ns.len() < 2 {
        return Err(Error::Input("interpolation needs at least 2 samples".into()));
    }
    if !(target_rate_hz > 0.0 && target_rate_hz.is_finite()) {
        return Err(Error::Parameter(format!(
            "target rate {target_rate_hz} must be > 0"
        )));
    }
    if timestamps_ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Input("timestamps not strictly increasing".into()));
    }
    let t0 = timestamps_ns[0];
    let span_ns = (timestamps_ns[timestamps_ns.len() - 1] - t0) as f64;
    let step_ns = 1e9 / target_rate_hz;
    let count = (span_ns / step_ns + 1e-9).floor() as usize + 1;

    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    for k in 0..count {
        let t = k as f64 * step_ns;
        while j + 2 < timestamps_ns.len() && ((timestamps_ns[j + 1] - t0) as f64) <= t {
            j += 1;
        }
        let ta = (timestamps_ns[j] - t0) as f64;
        let tb = (timestamps_ns[j + 1] - t0) as f64;
        let frac = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
        out.push(match frac {
            f if f == 0.0 => values[j],
            f if f == 1.0 => values[j + 1],
            f => values[j] + f * (values[j + 1] - values[j]),
        });
    }
    UniformSeries::new(target_rate_hz, out)
}

/// Consecutive non-overlapping windows; a trailing remainder is dropped.
pub fn segment(series: &UniformSeries, seconds: f64) -> Result<Vec<Segment>> {
    if !(seconds > 0.0 && seconds.is_finite()) {
        return Err(Error::Parameter(format!(
            "segment length {seconds} s must be > 0"
        )));
    }
    let window = (seconds * series.rate_hz).round() as usize;
    if window == 0 {
        return Err(Error::Parameter("segment shorter than one sample".into()));
    }
    Ok(series
        .values
        .chunks_exact(window)
        .enumerate()
        .map(|(i, chunk)| Segment {
            values: chunk.to_vec(),
            duration_s: seconds,
            source_offset: i * window,
        })
        .collect())
}

/// Settings for [`prepare_trace`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepConfig {
    pub axis: Axis,
    pub rate_hz: f64,
    pub cutoff_hz: f64,
    pub segment_seconds: f64,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            axis: Axis::Z,
            rate_hz: 1000.0,
            cutoff_hz: 20.0,
            segment_seconds: 4.0,
        }
    }
}

/// Full conditioning chain from a raw trace to the filtered uniform series.
pub fn condition_trace(trace: &RawAccelTrace, cfg: &PrepConfig) -> Result<UniformSeries> {
    let normalized = zero_mean_normalize(trace);
    let (t, v) = select_axis(&normalized, cfg.axis);
    let uniform = interpolate_uniform(&t, &v, cfg.rate_hz)?;
    high_pass(&uniform, cfg.cutoff_hz)
}

/// [`condition_trace`] followed by segmentation.
pub fn prepare_trace(trace: &RawAccelTrace, cfg: &PrepConfig) -> Result<Vec<Segment>> {
    segment(&condition_trace(trace, cfg)?, cfg.segment_seconds)
}
