//! Step-signature extraction.
//!
//! A window of four consecutive steps is cut from the denoised spectrogram and
//! converted to gray levels. Steps 1 and 3 are averaged into one signature and
//! steps 2 and 4 into the other. Step times are then refined by normalized
//! cross-correlation of each averaged signature against the window (shifts
//! along time only) and the signatures are re-averaged at the refined times.
//!
//! Which signature belongs to which leg is unknown, so the pair is labelled
//! `a` / `b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::flags::{raise, Flag};
use crate::gaitparams::{Envelope, GaitStats};
use crate::sim::Direction;
use crate::tfa::{to_gray, GrayImage, Region, Spectrogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StepParams {
    /// Lower edge of the window rows as a multiple of the torso Doppler.
    pub torso_factor: f64,
    pub db_floor: f64,
    pub db_ceil: f64,
    /// Registration search radius in step periods.
    pub search_radius: f64,
    /// Registration maxima below this keep the initial step time.
    pub min_correlation: f64,
}

impl Default for StepParams {
    fn default() -> Self {
        Self {
            torso_factor: 1.5,
            db_floor: -50.0,
            db_ceil: 0.0,
            search_radius: 0.25,
            min_correlation: 0.3,
        }
    }
}

/// Four-step analysis window `f(x, y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepWindow {
    pub image: GrayImage,
    /// First spectrogram frame of the window.
    pub start_frame: usize,
    /// Spectrogram bins covered, ascending.
    pub bins: std::ops::Range<usize>,
    pub direction: Direction,
    /// Window-relative frames of the four selected step peaks.
    pub step_frames: [usize; 4],
    /// Step signature width `N_x`, frames.
    pub step_width: usize,
}

impl StepWindow {
    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }
}

/// Averaged step signatures of the two legs.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPair {
    pub a: GrayImage,
    pub b: GrayImage,
    /// Window-relative centre frames of steps 1-4 (steps 1, 3 form `a`).
    pub step_times: [usize; 4],
    pub flags: Vec<Flag>,
}

/// `N_x = round((2/3) * f_s / (f_step * hop))`.
pub fn step_width(sampling_frequency: f64, f_step: f64, hop: usize) -> usize {
    ((2.0 / 3.0) * sampling_frequency / (f_step * hop as f64)).round() as usize
}

/// Ascending spectrogram bins with |f| inside `[lo, hi]` on the motion side.
fn doppler_bins(spec: &Spectrogram, direction: Direction, lo: f64, hi: f64) -> std::ops::Range<usize> {
    let sign = direction.doppler_sign();
    let (a, b) = (spec.bin_of(sign * lo), spec.bin_of(sign * hi));
    let (first, last) = if a <= b { (a, b) } else { (b, a) };
    first..last + 1
}

/// Selects the run of four consecutive step peaks with the highest mean
/// envelope energy and cuts the window from half a step before the first peak
/// to half a step after the last, rows spanning `[1.5 f_torso, f_max]`.
/// Runs whose window would be clipped by the recording edges are considered
/// only if no other run exists.
pub fn select_four_step_window(
    spec: &Spectrogram,
    env: &Envelope,
    stats: &GaitStats,
    params: &StepParams,
) -> Result<StepWindow> {
    let peaks = &stats.step_peaks;
    if peaks.len() < 4 {
        return Err(Error::InsufficientSteps {
            found: peaks.len(),
            needed: 4,
        });
    }
    let frames = spec.frames();
    let half_step = (0.5 * spec.frame_rate() / stats.f_step).round() as usize;
    let mags = env.magnitudes();
    let span = |i: usize| {
        let start = peaks[i].frame.saturating_sub(half_step);
        let end = (peaks[i + 3].frame + half_step + 1).min(frames);
        (start, end)
    };
    let inside = |i: usize| peaks[i].frame >= half_step && peaks[i + 3].frame + half_step < frames;
    // runs clipped by the recording edges only when nothing else fits
    let any_inside = (0..=peaks.len() - 4).any(inside);
    let mut best: Option<(usize, f64)> = None;
    for i in (0..=peaks.len() - 4).filter(|&i| !any_inside || inside(i)) {
        let (start, end) = span(i);
        let energy = mags[start..end].iter().map(|m| m * m).sum::<f64>() / (end - start) as f64;
        if best.is_none_or(|(_, e)| energy > e) {
            best = Some((i, energy));
        }
    }
    let (first, _) = best.ok_or(Error::EmptyRegion)?;
    let (start, end) = span(first);

    let lo = params.torso_factor * stats.f_torso;
    if !(lo < stats.f_max) {
        return Err(Error::Degenerate(format!(
            "row band [{lo:.1}, {:.1}] Hz is empty",
            stats.f_max
        )));
    }
    let bins = doppler_bins(spec, stats.direction, lo, stats.f_max);
    let region = Region {
        frames: start..end,
        bins: bins.clone(),
        mirror: stats.direction == Direction::Away,
    };
    let image = to_gray(spec, &region, params.db_floor, params.db_ceil)?;
    let step_frames = [0, 1, 2, 3].map(|j| peaks[first + j].frame - start);
    Ok(StepWindow {
        image,
        start_frame: start,
        bins,
        direction: stats.direction,
        step_frames,
        step_width: step_width(spec.sampling_frequency, stats.f_step, spec.params.hop),
    })
}

/// Cuts `width` columns centred on `centre`; columns outside the window stay 0.
fn extract(window: &GrayImage, centre: usize, width: usize, flags: &mut Vec<Flag>) -> GrayImage {
    let start = centre as i64 - (width / 2) as i64;
    let mut out = GrayImage::new(width, window.height());
    out.db_range = window.db_range;
    for x in 0..width {
        let src = start + x as i64;
        if src < 0 || src >= window.width() as i64 {
            raise(flags, Flag::ZeroPadded);
            continue;
        }
        for (y, &v) in window.column(src as usize).iter().enumerate() {
            out.set(x, y, v);
        }
    }
    out
}

/// Extracts the four steps centred on `step_times` and averages alternate ones.
pub fn extract_and_average(window: &GrayImage, step_times: [usize; 4], step_width: usize) -> Result<StepPair> {
    if step_width == 0 || step_width > window.width() {
        return Err(Error::StepWiderThanWindow {
            step: step_width,
            window: window.width(),
        });
    }
    let mut flags = Vec::new();
    let steps: Vec<GrayImage> = step_times
        .iter()
        .map(|&t| extract(window, t, step_width, &mut flags))
        .collect();
    Ok(StepPair {
        a: GrayImage::mean_of(&[&steps[0], &steps[2]])?,
        b: GrayImage::mean_of(&[&steps[1], &steps[3]])?,
        step_times,
        flags,
    })
}

/// Normalized cross-correlation of a template slid along the window's time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct NccProfile {
    /// `gamma[u]` for `u = 0..=M_x - N_x`.
    pub gamma: Vec<f64>,
    /// Positions where a zero-variance patch or template left gamma undefined.
    pub undefined: Vec<bool>,
}

impl NccProfile {
    pub fn argmax(&self) -> Option<usize> {
        self.gamma
            .iter()
            .enumerate()
            .filter(|(u, _)| !self.undefined[*u])
            .fold(None, |best: Option<(usize, f64)>, (u, &g)| match best {
                Some((_, bg)) if bg >= g => best,
                _ => Some((u, g)),
            })
            .map(|(u, _)| u)
    }

    pub fn any_undefined(&self) -> bool {
        self.undefined.iter().any(|&u| u)
    }
}

const VARIANCE_EPS: f64 = 1e-12;

/// `gamma(u, 0)` for every horizontal shift of `template` over `window`.
///
/// The template spans the full window height, so there is no vertical search.
pub fn ncc_registration(window: &GrayImage, template: &GrayImage) -> Result<NccProfile> {
    ncc_registration_with(window, template, Exec::default())
}

pub fn ncc_registration_with(window: &GrayImage, template: &GrayImage, exec: Exec) -> Result<NccProfile> {
    let (mw, mh) = window.dims();
    let (nw, nh) = template.dims();
    if nw == 0 || nh == 0 || nw > mw || nh != mh {
        return Err(Error::TemplateTooLarge {
            template: (nw, nh),
            window: (mw, mh),
        });
    }
    let count = (nw * nh) as f64;
    let t_mean = template.pixels().iter().sum::<f64>() / count;
    let t_centred: Vec<f64> = template.pixels().iter().map(|p| p - t_mean).collect();
    let t_energy: f64 = t_centred.iter().map(|t| t * t).sum();

    // prefix sums over columns of the window
    let mut sum = vec![0.0; mw + 1];
    let mut sum_sq = vec![0.0; mw + 1];
    for x in 0..mw {
        let col = window.column(x);
        sum[x + 1] = sum[x] + col.iter().sum::<f64>();
        sum_sq[x + 1] = sum_sq[x] + col.iter().map(|v| v * v).sum::<f64>();
    }

    let positions = mw - nw + 1;
    let pixels = window.pixels();
    let results = exec.map_range(positions, |u| {
        let s = sum[u + nw] - sum[u];
        let ss = sum_sq[u + nw] - sum_sq[u];
        let f_energy = (ss - s * s / count).max(0.0);
        if t_energy <= VARIANCE_EPS * count || f_energy <= VARIANCE_EPS * count {
            return (0.0, true);
        }
        // template is zero-mean, so the patch mean drops out of the numerator
        let patch = &pixels[u * nh..(u + nw) * nh];
        let num: f64 = patch.iter().zip(&t_centred).map(|(f, t)| f * t).sum();
        ((num / (f_energy * t_energy).sqrt()).clamp(-1.0, 1.0), false)
    });
    let (gamma, undefined) = results.into_iter().unzip();
    Ok(NccProfile { gamma, undefined })
}

/// Outcome of refining a step pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub pair: StepPair,
    /// gamma at each step's initial and refined position, per template.
    pub initial_scores: [f64; 4],
    pub refined_scores: [f64; 4],
}

/// One registration pass: correlate each averaged signature against the
/// window, move each of its steps to the best shift within
/// `search_radius / f_step` of the initial time, then re-extract and average.
pub fn refine_step_pair(
    window: &StepWindow,
    initial: &StepPair,
    f_step: f64,
    frame_rate: f64,
    params: &StepParams,
) -> Result<Refinement> {
    let n_x = initial.a.width();
    let half = (n_x / 2) as i64;
    let max_u = window.width() as i64 - n_x as i64;
    let radius = (params.search_radius * frame_rate / f_step).round() as i64;
    let profiles = [
        ncc_registration(&window.image, &initial.a)?,
        ncc_registration(&window.image, &initial.b)?,
    ];
    let mut flags = initial.flags.clone();
    if profiles.iter().any(NccProfile::any_undefined) {
        raise(&mut flags, Flag::UndefinedCorrelation);
    }

    let mut times = initial.step_times;
    let mut initial_scores = [0.0; 4];
    let mut refined_scores = [0.0; 4];
    for (step, time) in times.iter_mut().enumerate() {
        let profile = &profiles[step % 2];
        let u0 = *time as i64 - half;
        let score_at = |u: i64| -> Option<f64> {
            (0..=max_u)
                .contains(&u)
                .then_some(u as usize)
                .filter(|&u| !profile.undefined[u])
                .map(|u| profile.gamma[u])
        };
        let initial_score = score_at(u0);
        initial_scores[step] = initial_score.unwrap_or(f64::NAN);
        let mut best = initial_score.map(|g| (u0, g));
        for u in (u0 - radius).max(0)..=(u0 + radius).min(max_u) {
            if let Some(g) = score_at(u) {
                if best.is_none_or(|(_, bg)| g > bg) {
                    best = Some((u, g));
                }
            }
        }
        match best {
            None => {
                raise(&mut flags, Flag::RefinementOutOfWindow);
                refined_scores[step] = initial_scores[step];
            }
            Some((_, g)) if g < params.min_correlation => {
                raise(&mut flags, Flag::WeakCorrelation);
                refined_scores[step] = initial_scores[step];
            }
            Some((u, g)) => {
                *time = (u + half) as usize;
                refined_scores[step] = g;
            }
        }
    }
    // steps of one leg must not overlap after refinement
    for leg in 0..2 {
        if times[leg + 2].abs_diff(times[leg]) < n_x {
            raise(&mut flags, Flag::RefinementOutOfWindow);
            times[leg] = initial.step_times[leg];
            times[leg + 2] = initial.step_times[leg + 2];
            refined_scores[leg] = initial_scores[leg];
            refined_scores[leg + 2] = initial_scores[leg + 2];
        }
    }

    let mut pair = extract_and_average(&window.image, times, n_x)?;
    for f in flags {
        raise(&mut pair.flags, f);
    }
    Ok(Refinement {
        pair,
        initial_scores,
        refined_scores,
    })
}
