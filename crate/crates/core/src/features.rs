//! (Dis)similarity features of the two averaged step signatures.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flags::{raise, Flag};
use crate::gaitparams::{GaitStats, StepPeak};
use crate::sim::{Direction, Label};
use crate::stepext::StepPair;
use crate::tfa::GrayImage;

/// Feature identifiers in table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Feature {
    #[serde(rename = "r")]
    R,
    #[serde(rename = "r_H")]
    RHigh,
    #[serde(rename = "r_M")]
    RMid,
    #[serde(rename = "r_L")]
    RLow,
    #[serde(rename = "MSE")]
    Mse,
    #[serde(rename = "MAE")]
    Mae,
    #[serde(rename = "MSSIM")]
    Mssim,
    #[serde(rename = "delta_fmax")]
    DeltaFmax,
}

impl Feature {
    pub const ALL: [Feature; 8] = [
        Feature::R,
        Feature::RHigh,
        Feature::RMid,
        Feature::RLow,
        Feature::Mse,
        Feature::Mae,
        Feature::Mssim,
        Feature::DeltaFmax,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Feature::R => "r",
            Feature::RHigh => "r_H",
            Feature::RMid => "r_M",
            Feature::RLow => "r_L",
            Feature::Mse => "MSE",
            Feature::Mae => "MAE",
            Feature::Mssim => "MSSIM",
            Feature::DeltaFmax => "delta_fmax",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_name(name: &str) -> Option<Feature> {
        Feature::ALL.into_iter().find(|f| f.name() == name)
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: [f64; 8],
    pub flags: Vec<Flag>,
}

impl FeatureVector {
    pub fn get(&self, feature: Feature) -> f64 {
        self.values[feature.index()]
    }
}

/// One row of a feature table: a measurement's identity, label and features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub subject: String,
    pub direction: Direction,
    pub label: Label,
    pub values: [f64; 8],
    pub flags: Vec<Flag>,
}

impl FeatureRow {
    pub fn new(subject: impl Into<String>, direction: Direction, label: Label, features: FeatureVector) -> Self {
        Self {
            subject: subject.into(),
            direction,
            label,
            values: features.values,
            flags: features.flags,
        }
    }

    pub fn get(&self, feature: Feature) -> f64 {
        self.values[feature.index()]
    }
}

fn check_sizes(l: &GrayImage, r: &GrayImage) -> Result<()> {
    if l.dims() != r.dims() {
        return Err(Error::SizeMismatch(l.dims(), r.dims()));
    }
    if l.width() == 0 || l.height() == 0 {
        return Err(Error::EmptyRegion);
    }
    Ok(())
}

fn pearson<'a>(pairs: impl Iterator<Item = (&'a f64, &'a f64)> + Clone) -> Option<f64> {
    let n = pairs.clone().count() as f64;
    let (sl, sr) = pairs.clone().fold((0.0, 0.0), |(a, b), (l, r)| (a + l, b + r));
    let (ml, mr) = (sl / n, sr / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (l, r) in pairs {
        let (dl, dr) = (l - ml, r - mr);
        sxy += dl * dr;
        sxx += dl * dl;
        syy += dr * dr;
    }
    let denom = (sxx * syy).sqrt();
    if denom <= 1e-300 || sxx <= 1e-24 * n || syy <= 1e-24 * n {
        return None;
    }
    Some((sxy / denom).clamp(-1.0, 1.0))
}

/// Pearson correlation over all pixels; `None` when either image is flat.
pub fn correlation(l: &GrayImage, r: &GrayImage) -> Result<Option<f64>> {
    check_sizes(l, r)?;
    Ok(pearson(l.pixels().iter().zip(r.pixels())))
}

/// Doppler sub-band of the signature rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Band {
    Low,
    Mid,
    High,
}

/// Row range of `band`: equal thirds of the rows, high = largest |Doppler|.
pub fn band_rows(height: usize, band: Band) -> std::ops::Range<usize> {
    let b1 = (height as f64 / 3.0).round() as usize;
    let b2 = (2.0 * height as f64 / 3.0).round() as usize;
    match band {
        Band::Low => 0..b1,
        Band::Mid => b1..b2,
        Band::High => b2..height,
    }
}

/// Correlation restricted to one third of the rows.
pub fn band_correlation(l: &GrayImage, r: &GrayImage, band: Band) -> Result<Option<f64>> {
    check_sizes(l, r)?;
    if l.height() < 3 {
        return Err(Error::ImageTooSmall {
            image: l.dims(),
            window: 3,
        });
    }
    let rows = band_rows(l.height(), band);
    correlation(&l.rows(rows.clone()), &r.rows(rows))
}

pub fn mse(l: &GrayImage, r: &GrayImage) -> Result<f64> {
    check_sizes(l, r)?;
    let n = l.pixels().len() as f64;
    Ok(l.pixels().iter().zip(r.pixels()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n)
}

pub fn mae(l: &GrayImage, r: &GrayImage) -> Result<f64> {
    check_sizes(l, r)?;
    let n = l.pixels().len() as f64;
    Ok(l.pixels().iter().zip(r.pixels()).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsimParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
    /// Side of the square Gaussian window, pixels.
    pub window: usize,
    pub sigma: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
            window: 11,
            sigma: 1.5,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    pub fn c3(&self) -> f64 {
        self.c2() / 2.0
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.alpha, self.beta, self.gamma].iter().all(|e| e.is_finite()) {
            return Err(Error::InvalidConfig("SSIM exponents must be finite".into()));
        }
        if !(self.c1() > 0.0 && self.c2() > 0.0 && self.sigma > 0.0 && self.window > 0) {
            return Err(Error::InvalidConfig("SSIM constants must be positive".into()));
        }
        Ok(())
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn kernel(&self) -> Vec<f64> {
        let c = (self.window as f64 - 1.0) / 2.0;
        let taps: Vec<f64> = (0..self.window)
            .map(|i| (-(i as f64 - c).powi(2) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let s: f64 = taps.iter().sum();
        taps.into_iter().map(|t| t / s).collect()
    }
}

/// Separable "valid" filtering of a column-major `w x h` buffer.
fn filter_valid(data: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    // along y within each column
    let mut tmp = vec![0.0; w * oh];
    for x in 0..w {
        let col = &data[x * h..(x + 1) * h];
        for y in 0..oh {
            tmp[x * oh + y] = k.iter().zip(&col[y..y + n]).map(|(a, b)| a * b).sum();
        }
    }
    // along x
    let mut out = vec![0.0; ow * oh];
    for x in 0..ow {
        for y in 0..oh {
            out[x * oh + y] = (0..n).map(|i| k[i] * tmp[(x + i) * oh + y]).sum();
        }
    }
    out
}

fn pow(v: f64, e: f64) -> f64 {
    if e == 1.0 {
        v
    } else {
        v.powf(e)
    }
}

/// Local SSIM map over every position where the window fits entirely.
pub fn ssim_map(l: &GrayImage, r: &GrayImage, params: &SsimParams) -> Result<Vec<f64>> {
    check_sizes(l, r)?;
    params.validate()?;
    let (w, h) = l.dims();
    if w < params.window || h < params.window {
        return Err(Error::ImageTooSmall {
            image: (w, h),
            window: params.window,
        });
    }
    let k = params.kernel();
    let (x, y) = (l.pixels(), r.pixels());
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();
    let mu_x = filter_valid(x, w, h, &k);
    let mu_y = filter_valid(y, w, h, &k);
    let e_xx = filter_valid(&xx, w, h, &k);
    let e_yy = filter_valid(&yy, w, h, &k);
    let e_xy = filter_valid(&xy, w, h, &k);
    let (c1, c2, c3) = (params.c1(), params.c2(), params.c3());
    Ok((0..mu_x.len())
        .map(|i| {
            let (mx, my) = (mu_x[i], mu_y[i]);
            let var_x = (e_xx[i] - mx * mx).max(0.0);
            let var_y = (e_yy[i] - my * my).max(0.0);
            let cov = e_xy[i] - mx * my;
            let (sx, sy) = (var_x.sqrt(), var_y.sqrt());
            let luminance = (2.0 * mx * my + c1) / (mx * mx + my * my + c1);
            let contrast = (2.0 * sx * sy + c2) / (var_x + var_y + c2);
            let structure = (cov + c3) / (sx * sy + c3);
            pow(luminance, params.alpha) * pow(contrast, params.beta) * pow(structure, params.gamma)
        })
        .collect())
}

/// Mean of the local SSIM map.
pub fn mssim(l: &GrayImage, r: &GrayImage, params: &SsimParams) -> Result<f64> {
    let map = ssim_map(l, r, params)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

/// Mean absolute difference between consecutive step-peak Doppler values.
pub fn delta_fmax(peaks: &[StepPeak]) -> Result<f64> {
    if peaks.len() < 2 {
        return Err(Error::InsufficientSteps {
            found: peaks.len(),
            needed: 2,
        });
    }
    let diffs: f64 = peaks
        .windows(2)
        .map(|w| (w[1].doppler - w[0].doppler).abs())
        .sum();
    Ok(diffs / (peaks.len() - 1) as f64)
}

/// All eight features in table order. Undefined correlations are imputed as 0
/// and flagged.
pub fn feature_vector(pair: &StepPair, stats: &GaitStats, ssim: &SsimParams) -> Result<FeatureVector> {
    let (l, r) = (&pair.a, &pair.b);
    let mut flags = Vec::new();
    let mut defined = |feature: Feature, value: Option<f64>| match value {
        Some(v) => v,
        None => {
            raise(&mut flags, Flag::Undefined(feature));
            0.0
        }
    };
    let values = [
        defined(Feature::R, correlation(l, r)?),
        defined(Feature::RHigh, band_correlation(l, r, Band::High)?),
        defined(Feature::RMid, band_correlation(l, r, Band::Mid)?),
        defined(Feature::RLow, band_correlation(l, r, Band::Low)?),
        mse(l, r)?,
        mae(l, r)?,
        mssim(l, r, ssim)?,
        delta_fmax(&stats.step_peaks)?,
    ];
    Ok(FeatureVector { values, flags })
}
