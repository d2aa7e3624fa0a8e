//! Gait parameters from a denoised spectrogram: envelope, step rate, step
//! peaks, maximal Doppler shift and torso Doppler shift.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Direction;
use crate::tfa::Spectrogram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitParams {
    /// Length of the median filter applied to the raw envelope, frames.
    pub median_frames: usize,
    /// Cells weaker than this (dB below the spectrogram maximum) never count
    /// towards the envelope, whatever the noise threshold says.
    pub dynamic_range_db: f64,
    /// Largest run of suppressed cells, Hz, bridged while following the
    /// signature outwards from the strongest cell of a frame.
    pub max_gap_hz: f64,
    pub min_step_rate: f64,
    pub max_step_rate: f64,
    /// Frequency resolution of the step-rate search, Hz.
    pub step_rate_resolution: f64,
    /// Minimum peak separation in step periods.
    pub peak_separation: f64,
    /// Upper edge of the torso search band relative to max |envelope|.
    pub torso_band: f64,
    /// Step times sit at the centre of the run where |envelope| stays at or
    /// above this fraction of the peak value.
    pub crown_fraction: f64,
}

impl Default for GaitParams {
    fn default() -> Self {
        Self {
            median_frames: 11,
            dynamic_range_db: 40.0,
            max_gap_hz: 30.0,
            min_step_rate: 0.5,
            max_step_rate: 4.0,
            step_rate_resolution: 0.005,
            peak_separation: 0.6,
            torso_band: 0.5,
            crown_fraction: 0.8,
        }
    }
}

impl GaitParams {
    pub fn validate(&self) -> Result<()> {
        if self.median_frames == 0 || self.median_frames.is_multiple_of(2) {
            return Err(Error::InvalidConfig("median_frames must be odd".into()));
        }
        if !(self.min_step_rate > 0.0 && self.min_step_rate < self.max_step_rate) {
            return Err(Error::InvalidConfig("invalid step-rate band".into()));
        }
        if !(self.step_rate_resolution > 0.0 && self.peak_separation > 0.0) {
            return Err(Error::InvalidConfig("resolution and separation must be positive".into()));
        }
        if !(self.torso_band > 0.0 && self.torso_band < 1.0) {
            return Err(Error::InvalidConfig("torso_band must lie in (0, 1)".into()));
        }
        if !(self.crown_fraction > 0.0 && self.crown_fraction <= 1.0) {
            return Err(Error::InvalidConfig("crown_fraction must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Per-frame extreme Doppler frequency on the motion side.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    /// Signed frequency, Hz.
    pub values: Vec<f64>,
    /// Frames without any super-threshold cell.
    pub empty_frames: Vec<bool>,
    pub frame_rate: f64,
    pub direction: Direction,
    pub median_frames: usize,
}

impl Envelope {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn all_empty(&self) -> bool {
        self.empty_frames.iter().all(|&e| e)
    }

    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|v| v.abs()).collect()
    }

    pub fn duration(&self) -> f64 {
        self.values.len() as f64 / self.frame_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPeak {
    pub frame: usize,
    /// |envelope| at the peak, Hz.
    pub doppler: f64,
}

/// Gait statistics of one measurement. Doppler values are magnitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaitStats {
    pub f_step: f64,
    pub f_max: f64,
    pub f_torso: f64,
    pub step_peaks: Vec<StepPeak>,
    pub direction: Direction,
}

/// Bins on the motion side ordered from the largest |f| towards 0 Hz.
fn motion_side_bins(spec: &Spectrogram, direction: Direction) -> Vec<usize> {
    let half = spec.bins() / 2;
    match direction {
        Direction::Toward => (half + 1..spec.bins()).rev().collect(),
        Direction::Away => (0..half).collect(),
    }
}

fn median_filter(values: &[f64], len: usize) -> Vec<f64> {
    let r = len / 2;
    let mut buf = Vec::with_capacity(len);
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(r);
            let hi = (i + r + 1).min(values.len());
            buf.clear();
            buf.extend_from_slice(&values[lo..hi]);
            buf.sort_by(|a, b| a.total_cmp(b));
            let m = buf.len();
            if m % 2 == 1 {
                buf[m / 2]
            } else {
                0.5 * (buf[m / 2 - 1] + buf[m / 2])
            }
        })
        .collect()
}

/// Envelope of the micro-Doppler signature.
///
/// For every frame the signature is followed from its strongest motion-side
/// cell towards larger |f| through surviving cells, bridging gaps up to
/// `max_gap_hz`; the last cell reached is the envelope value. The raw
/// envelope is then median filtered.
pub fn envelope(spec: &Spectrogram, direction: Direction, params: &GaitParams) -> Result<Envelope> {
    params.validate()?;
    // ordered from 0 Hz outwards
    let mut bins = motion_side_bins(spec, direction);
    bins.reverse();
    let floor = spec.max_value() * 10f64.powf(-params.dynamic_range_db / 10.0);
    let max_gap = (params.max_gap_hz / spec.bin_width()).round().max(0.0) as usize;
    let alive = |n: usize, k: usize| {
        let v = spec.get(n, k);
        v > 0.0 && v >= floor && spec.is_signal(n, k)
    };
    let mut raw = Vec::with_capacity(spec.frames());
    let mut empty = Vec::with_capacity(spec.frames());
    for n in 0..spec.frames() {
        let start = bins
            .iter()
            .enumerate()
            .filter(|&(_, &k)| alive(n, k))
            .max_by(|a, b| spec.get(n, *a.1).total_cmp(&spec.get(n, *b.1)))
            .map(|(i, _)| i);
        let Some(start) = start else {
            raw.push(0.0);
            empty.push(true);
            continue;
        };
        let mut last = start;
        let mut gap = 0;
        for (i, &k) in bins.iter().enumerate().skip(start + 1) {
            if alive(n, k) {
                last = i;
                gap = 0;
            } else {
                gap += 1;
                if gap > max_gap {
                    break;
                }
            }
        }
        raw.push(spec.freq_axis[bins[last]]);
        empty.push(false);
    }
    Ok(Envelope {
        values: median_filter(&raw, params.median_frames),
        empty_frames: empty,
        frame_rate: spec.frame_rate(),
        direction,
        median_frames: params.median_frames,
    })
}

/// Dominant periodicity of |envelope| inside the step-rate band.
pub fn estimate_step_rate(env: &Envelope, params: &GaitParams) -> Result<f64> {
    if env.duration() < 2.0 {
        return Err(Error::Degenerate(format!(
            "envelope covers {:.2} s, need at least 2 s",
            env.duration()
        )));
    }
    let mags = env.magnitudes();
    let mean = mags.iter().sum::<f64>() / mags.len() as f64;
    let centred: Vec<f64> = mags.iter().map(|m| m - mean).collect();
    let energy: f64 = centred.iter().map(|c| c * c).sum();
    if energy <= 1e-18 * (mean * mean * mags.len() as f64).max(1e-300) {
        return Err(Error::NoGaitPeriodicity);
    }
    let steps = ((params.max_step_rate - params.min_step_rate) / params.step_rate_resolution)
        .round() as usize;
    let spectrum: Vec<f64> = (0..=steps)
        .map(|i| {
            let f = params.min_step_rate + i as f64 * params.step_rate_resolution;
            dtft_magnitude(&centred, f / env.frame_rate)
        })
        .collect();
    let (best, &peak) = spectrum
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or(Error::NoGaitPeriodicity)?;
    if best == 0 || best == steps || peak <= 0.0 {
        return Err(Error::NoGaitPeriodicity);
    }
    // parabolic refinement on the magnitude spectrum
    let (a, b, c) = (spectrum[best - 1], peak, spectrum[best + 1]);
    let denom = a - 2.0 * b + c;
    let offset = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    Ok(params.min_step_rate + (best as f64 + offset.clamp(-0.5, 0.5)) * params.step_rate_resolution)
}

/// |sum x[n] exp(-j 2 pi nu n)| for normalized frequency `nu`.
fn dtft_magnitude(x: &[f64], nu: f64) -> f64 {
    let step = Complex64::from_polar(1.0, -2.0 * PI * nu);
    let mut phasor = Complex64::new(1.0, 0.0);
    let mut acc = Complex64::new(0.0, 0.0);
    for (i, &v) in x.iter().enumerate() {
        acc += phasor * v;
        phasor *= step;
        if i % 1024 == 1023 {
            phasor = Complex64::from_polar(1.0, -2.0 * PI * nu * (i + 1) as f64);
        }
    }
    acc.norm()
}

/// Local maxima of |envelope| at least `peak_separation / f_step` apart.
///
/// Plateaus count once, at their centre. Candidates are accepted greedily from
/// the highest down, so of two close maxima the lower is discarded. Each peak is
/// then timed by [`centre_on_crown`].
pub fn detect_step_peaks(env: &Envelope, f_step: f64, params: &GaitParams) -> Result<Vec<StepPeak>> {
    let peaks = find_peaks(env, f_step, params, 4)?;
    let reach = (0.5 * params.peak_separation * env.frame_rate / f_step) as usize;
    Ok(centre_on_crown(env, &peaks, params.crown_fraction, reach))
}

/// Moves each peak to the midpoint of the contiguous run, at most `reach`
/// frames to either side, where |envelope| >= `fraction * peak`. The steep
/// flanks of a step lobe time it more stably than its noisy crest.
pub fn centre_on_crown(env: &Envelope, peaks: &[StepPeak], fraction: f64, reach: usize) -> Vec<StepPeak> {
    let mags = env.magnitudes();
    peaks
        .iter()
        .map(|p| {
            let level = fraction * p.doppler;
            let lo = p.frame.saturating_sub(reach);
            let hi = (p.frame + reach).min(mags.len() - 1);
            let mut first = p.frame;
            while first > lo && mags[first - 1] >= level {
                first -= 1;
            }
            let mut last = p.frame;
            while last < hi && mags[last + 1] >= level {
                last += 1;
            }
            StepPeak {
                frame: (first + last) / 2,
                doppler: p.doppler,
            }
        })
        .collect()
}

pub(crate) fn find_peaks(
    env: &Envelope,
    f_step: f64,
    params: &GaitParams,
    needed: usize,
) -> Result<Vec<StepPeak>> {
    if !(f_step.is_finite() && f_step > 0.0) {
        return Err(Error::InvalidConfig(format!("step rate must be positive, got {f_step}")));
    }
    let mags = env.magnitudes();
    let min_gap = params.peak_separation * env.frame_rate / f_step;
    let mut candidates = Vec::new();
    let mut i = 1;
    while i + 1 < mags.len() {
        if mags[i] > mags[i - 1] {
            let mut j = i;
            while j + 1 < mags.len() && mags[j + 1] == mags[i] {
                j += 1;
            }
            if j + 1 < mags.len() && mags[j + 1] < mags[i] && mags[i] > 0.0 {
                candidates.push(StepPeak {
                    frame: (i + j) / 2,
                    doppler: mags[i],
                });
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }
    candidates.sort_by(|a, b| b.doppler.total_cmp(&a.doppler).then(a.frame.cmp(&b.frame)));
    let mut accepted: Vec<StepPeak> = Vec::new();
    for c in candidates {
        if accepted
            .iter()
            .all(|a| (a.frame as f64 - c.frame as f64).abs() >= min_gap)
        {
            accepted.push(c);
        }
    }
    accepted.sort_by_key(|p| p.frame);
    if accepted.len() < needed {
        return Err(Error::InsufficientSteps {
            found: accepted.len(),
            needed,
        });
    }
    Ok(accepted)
}

/// Mean |envelope| over the detected step peaks.
pub fn estimate_max_doppler(peaks: &[StepPeak]) -> Result<f64> {
    if peaks.len() < 2 {
        return Err(Error::InsufficientSteps {
            found: peaks.len(),
            needed: 2,
        });
    }
    Ok(peaks.iter().map(|p| p.doppler).sum::<f64>() / peaks.len() as f64)
}

/// Median over frames of the power-weighted centroid of the strongest ridge
/// below `torso_band * max|envelope|`.
///
/// The ridge is the main lobe around the per-frame maximum, two window-bins wide
/// on each side.
pub fn estimate_torso_doppler(spec: &Spectrogram, env: &Envelope, params: &GaitParams) -> Result<f64> {
    let max_env = env.magnitudes().into_iter().fold(0.0, f64::max);
    if max_env <= 0.0 {
        return Err(Error::Degenerate("envelope is empty".into()));
    }
    let band = params.torso_band * max_env;
    let bins: Vec<usize> = motion_side_bins(spec, env.direction)
        .into_iter()
        .filter(|&k| spec.freq_axis[k].abs() <= band)
        .collect();
    let lobe = 2.0 * spec.sampling_frequency / spec.params.window_length as f64;
    let mut centroids = Vec::with_capacity(spec.frames());
    for n in 0..spec.frames() {
        let peak = bins
            .iter()
            .copied()
            .filter(|&k| spec.is_signal(n, k))
            .max_by(|&a, &b| spec.get(n, a).total_cmp(&spec.get(n, b)));
        let Some(peak) = peak else { continue };
        let centre = spec.freq_axis[peak].abs();
        let (mut wsum, mut fsum) = (0.0, 0.0);
        for &k in &bins {
            let f = spec.freq_axis[k].abs();
            if (f - centre).abs() <= lobe && spec.is_signal(n, k) {
                let w = spec.get(n, k);
                wsum += w;
                fsum += w * f;
            }
        }
        if wsum > 0.0 {
            centroids.push(fsum / wsum);
        }
    }
    if centroids.is_empty() {
        return Err(Error::Degenerate("no torso ridge found".into()));
    }
    centroids.sort_by(|a, b| a.total_cmp(b));
    let m = centroids.len();
    Ok(if m % 2 == 1 {
        centroids[m / 2]
    } else {
        0.5 * (centroids[m / 2 - 1] + centroids[m / 2])
    })
}

/// Envelope, step rate, peaks and Doppler statistics in one pass.
pub fn gait_stats(spec: &Spectrogram, direction: Direction, params: &GaitParams) -> Result<(Envelope, GaitStats)> {
    let env = envelope(spec, direction, params)?;
    if env.all_empty() {
        return Err(Error::Degenerate("spectrogram fully suppressed".into()));
    }
    let f_step = estimate_step_rate(&env, params)?;
    let step_peaks = detect_step_peaks(&env, f_step, params)?;
    let f_max = estimate_max_doppler(&step_peaks)?;
    let f_torso = estimate_torso_doppler(spec, &env, params)?;
    if f_torso >= f_max {
        return Err(Error::Degenerate(format!(
            "torso Doppler {f_torso:.1} Hz not below maximal Doppler {f_max:.1} Hz"
        )));
    }
    Ok((
        env,
        GaitStats {
            f_step,
            f_max,
            f_torso,
            step_peaks,
            direction,
        },
    ))
}
