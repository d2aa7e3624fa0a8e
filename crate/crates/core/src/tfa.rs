//! Time-frequency analysis: spectrogram, adaptive noise suppression and the
//! dB / gray-scale conversions used for step-signature images.

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::sim::IqSignal;

/// Ratio of the mean of an exponential variable to its 20th percentile.
const EXP_MEAN_OVER_P20: f64 = 4.481_420_117_724_551;
const NOISE_PERCENTILE: f64 = 0.2;
const FRAMES_PER_TASK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StftParams {
    pub window_length: usize,
    pub fft_size: usize,
    pub hop: usize,
}

impl Default for StftParams {
    fn default() -> Self {
        Self {
            window_length: 255,
            fft_size: 2048,
            hop: 1,
        }
    }
}

impl StftParams {
    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 || self.window_length > self.fft_size {
            return Err(Error::InvalidConfig(format!(
                "window length {} must lie in 1..={}",
                self.window_length, self.fft_size
            )));
        }
        if self.hop == 0 {
            return Err(Error::InvalidConfig("hop must be at least 1".into()));
        }
        Ok(())
    }

    /// Symmetric Hamming window of `window_length` taps.
    pub fn window(&self) -> Vec<f64> {
        hamming(self.window_length)
    }

    pub fn frame_count(&self, samples: usize) -> usize {
        if samples < self.window_length {
            0
        } else {
            (samples - self.window_length) / self.hop + 1
        }
    }
}

pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|m| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * m as f64 / denom).cos())
        .collect()
}

/// Energy distribution over frames (time) and frequency bins.
///
/// Bins are centered: bin `k` holds frequency `(k - K/2) * f_s / K`, so
/// negative Doppler occupies the lower bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// Row-major `frames x bins`.
    values: Vec<f64>,
    frames: usize,
    bins: usize,
    pub frame_times: Vec<f64>,
    pub freq_axis: Vec<f64>,
    pub params: StftParams,
    pub sampling_frequency: f64,
    /// Per-frame suppression level and threshold, set by [`denoise`].
    pub noise: Option<NoiseLevels>,
    /// Values are 10*log10 relative to the maximum instead of linear power.
    pub is_db: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseLevels {
    pub floor: Vec<f64>,
    pub threshold: Vec<f64>,
    pub margin_db: f64,
}

impl Spectrogram {
    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn frame(&self, n: usize) -> &[f64] {
        &self.values[n * self.bins..(n + 1) * self.bins]
    }

    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.bins + k]
    }

    pub fn bin_width(&self) -> f64 {
        self.sampling_frequency / self.bins as f64
    }

    /// Frame rate in frames per second.
    pub fn frame_rate(&self) -> f64 {
        self.sampling_frequency / self.params.hop as f64
    }

    /// Bin closest to `freq` Hz.
    pub fn bin_of(&self, freq: f64) -> usize {
        let k = (freq / self.bin_width()).round() as i64 + (self.bins / 2) as i64;
        k.clamp(0, self.bins as i64 - 1) as usize
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// True when cell `(n, k)` survived noise suppression.
    pub fn is_signal(&self, n: usize, k: usize) -> bool {
        match &self.noise {
            Some(levels) => self.get(n, k) >= levels.threshold[n] && self.get(n, k) > levels.floor[n],
            None => self.get(n, k) > 0.0,
        }
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self {
            values,
            frames: self.frames,
            bins: self.bins,
            frame_times: self.frame_times.clone(),
            freq_axis: self.freq_axis.clone(),
            params: self.params.clone(),
            sampling_frequency: self.sampling_frequency,
            noise: self.noise.clone(),
            is_db: self.is_db,
        }
    }
}

fn fft_plan(size: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(size)
}

/// Squared-magnitude short-time Fourier transform with zero padding to `fft_size`.
pub fn stft_spectrogram(signal: &IqSignal, params: &StftParams) -> Result<Spectrogram> {
    stft_spectrogram_with(signal, params, Exec::default())
}

pub fn stft_spectrogram_with(
    signal: &IqSignal,
    params: &StftParams,
    exec: Exec,
) -> Result<Spectrogram> {
    params.validate()?;
    let n = signal.len();
    if n < params.window_length {
        return Err(Error::SignalTooShort {
            len: n,
            window: params.window_length,
        });
    }
    let bins = params.fft_size;
    let frames = params.frame_count(n);
    let window = params.window();
    let fft = fft_plan(bins);
    let half = bins / 2;
    let samples = &signal.samples;

    let mut values = vec![0.0; frames * bins];
    exec.for_each_chunk(&mut values, FRAMES_PER_TASK * bins, |task, out| {
        let mut buf = vec![Complex64::new(0.0, 0.0); bins];
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        for (j, row) in out.chunks_mut(bins).enumerate() {
            let start = (task * FRAMES_PER_TASK + j) * params.hop;
            buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
            for (m, w) in window.iter().enumerate() {
                buf[m] = samples[start + m] * *w;
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (k, v) in buf.iter().enumerate() {
                row[(k + half) % bins] = v.norm_sqr();
            }
        }
    });

    let fs = signal.sampling_frequency;
    let centre = (params.window_length as f64 - 1.0) / 2.0;
    let frame_times = (0..frames)
        .map(|f| (f as f64 * params.hop as f64 + centre) / fs)
        .collect();
    let freq_axis = (0..bins)
        .map(|k| (k as f64 - half as f64) * fs / bins as f64)
        .collect();
    Ok(Spectrogram {
        values,
        frames,
        bins,
        frame_times,
        freq_axis,
        params: params.clone(),
        sampling_frequency: fs,
        noise: None,
        is_db: false,
    })
}

/// `q`-quantile by lower order statistic.
fn lower_quantile(values: &mut [f64], q: f64) -> f64 {
    let idx = ((values.len() - 1) as f64 * q).floor() as usize;
    *values
        .select_nth_unstable_by(idx, |a, b| a.total_cmp(b))
        .1
}

/// Adaptive per-frame noise suppression.
///
/// The noise floor of a frame is the 20th percentile of its bin powers. For
/// exponentially distributed noise power the mean equals that percentile times
/// [`EXP_MEAN_OVER_P20`]; cells weaker than the estimated mean noise power
/// plus `margin_db` are replaced by the floor.
pub fn denoise(spec: &Spectrogram, margin_db: f64) -> Result<Spectrogram> {
    if !(margin_db.is_finite() && margin_db >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "margin_db must be non-negative, got {margin_db}"
        )));
    }
    let gain = EXP_MEAN_OVER_P20 * 10f64.powf(margin_db / 10.0);
    let mut floor = Vec::with_capacity(spec.frames);
    let mut threshold = Vec::with_capacity(spec.frames);
    let mut values = spec.values.clone();
    let mut sorted = vec![0.0; spec.bins];
    for (n, row) in values.chunks_mut(spec.bins).enumerate() {
        sorted.copy_from_slice(&spec.values[n * spec.bins..(n + 1) * spec.bins]);
        let f = lower_quantile(&mut sorted, NOISE_PERCENTILE);
        let t = f * gain;
        for v in row.iter_mut() {
            if *v < t {
                *v = f;
            }
        }
        floor.push(f);
        threshold.push(t);
    }
    let mut out = spec.with_values(values);
    out.noise = Some(NoiseLevels {
        floor,
        threshold,
        margin_db,
    });
    Ok(out)
}

/// Lowest dB value emitted for zero-power cells.
pub const DB_FLOOR: f64 = -300.0;

/// Converts linear power to dB relative to the global maximum.
pub fn to_db(spec: &Spectrogram) -> Spectrogram {
    let max = spec.max_value();
    let values = spec
        .values
        .iter()
        .map(|&v| power_to_db(v, max))
        .collect();
    let mut out = spec.with_values(values);
    out.is_db = true;
    out
}

fn power_to_db(power: f64, reference: f64) -> f64 {
    if reference <= 0.0 || power <= 0.0 {
        return if power > 0.0 || reference <= 0.0 && power == reference {
            0.0
        } else {
            DB_FLOOR
        };
    }
    (10.0 * (power / reference).log10()).max(DB_FLOOR)
}

/// Gray-scale image; `x` indexes time columns and `y` rows of increasing |Doppler|.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    /// Column-major: column `x` occupies `x*height..(x+1)*height`.
    pixels: Vec<f64>,
    /// dB range mapped onto [0, 1], when derived from a spectrogram.
    pub db_range: Option<(f64, f64)>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0.0; width * height],
            db_range: None,
        }
    }

    /// Builds an image from `f(x, y)`, clamping into [0, 1].
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut img = Self::new(width, height);
        for x in 0..width {
            for y in 0..height {
                img.pixels[x * height + y] = f(x, y).clamp(0.0, 1.0);
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[x * self.height + y]
    }

    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[x * self.height + y] = v.clamp(0.0, 1.0);
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn column(&self, x: usize) -> &[f64] {
        &self.pixels[x * self.height..(x + 1) * self.height]
    }

    /// Columns `range` as a new image.
    pub fn columns(&self, range: Range<usize>) -> GrayImage {
        let mut out = GrayImage::new(range.len(), self.height);
        out.pixels
            .copy_from_slice(&self.pixels[range.start * self.height..range.end * self.height]);
        out.db_range = self.db_range;
        out
    }

    /// Rows `range` as a new image.
    pub fn rows(&self, range: Range<usize>) -> GrayImage {
        let h = range.len();
        let mut out = GrayImage::new(self.width, h);
        for x in 0..self.width {
            out.pixels[x * h..(x + 1) * h].copy_from_slice(&self.column(x)[range.clone()]);
        }
        out.db_range = self.db_range;
        out
    }

    /// Pixel-wise mean of equally sized images.
    pub fn mean_of(images: &[&GrayImage]) -> Result<GrayImage> {
        let first = images.first().ok_or(Error::EmptyRegion)?;
        let mut out = GrayImage::new(first.width, first.height);
        out.db_range = first.db_range;
        for img in images {
            if img.dims() != first.dims() {
                return Err(Error::SizeMismatch(first.dims(), img.dims()));
            }
            for (o, p) in out.pixels.iter_mut().zip(&img.pixels) {
                *o += p;
            }
        }
        let n = images.len() as f64;
        out.pixels.iter_mut().for_each(|p| *p /= n);
        Ok(out)
    }
}

/// Rectangular spectrogram region: frame range and bin range.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub frames: Range<usize>,
    pub bins: Range<usize>,
    /// Reverse bin order so rows grow with |Doppler| for negative frequencies.
    pub mirror: bool,
}

/// Maps a spectrogram region to gray levels:
/// `clamp((dB - db_floor) / (db_ceil - db_floor), 0, 1)` with dB taken relative
/// to the region maximum.
pub fn to_gray(spec: &Spectrogram, region: &Region, db_floor: f64, db_ceil: f64) -> Result<GrayImage> {
    if !(db_floor < db_ceil) {
        return Err(Error::InvalidConfig(format!(
            "db_floor {db_floor} must be below db_ceil {db_ceil}"
        )));
    }
    if region.frames.is_empty()
        || region.bins.is_empty()
        || region.frames.end > spec.frames
        || region.bins.end > spec.bins
    {
        return Err(Error::EmptyRegion);
    }
    let width = region.frames.len();
    let height = region.bins.len();
    let mut reference = f64::NEG_INFINITY;
    for n in region.frames.clone() {
        for k in region.bins.clone() {
            reference = reference.max(spec.get(n, k));
        }
    }
    let span = db_ceil - db_floor;
    let mut img = GrayImage::from_fn(width, height, |x, y| {
        let k = if region.mirror {
            region.bins.end - 1 - y
        } else {
            region.bins.start + y
        };
        let v = spec.get(region.frames.start + x, k);
        let db = if spec.is_db { v - reference } else { power_to_db(v, reference) };
        (db - db_floor) / span
    });
    img.db_range = Some((db_floor, db_ceil));
    Ok(img)
}
