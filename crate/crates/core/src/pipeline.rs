//! Signal-to-features processing chain and batch helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::features::{feature_vector, FeatureRow, FeatureVector, SsimParams};
use crate::flags::raise;
use crate::gaitparams::{gait_stats, Envelope, GaitParams, GaitStats};
use crate::sim::{synthesize_return, CohortSpec, Direction, IqSignal, Label};
use crate::stepext::{extract_and_average, refine_step_pair, select_four_step_window, Refinement, StepPair, StepParams, StepWindow};
use crate::tfa::{denoise, stft_spectrogram_with, Spectrogram, StftParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    pub stft: StftParams,
    pub margin_db: f64,
    pub gait: GaitParams,
    pub steps: StepParams,
    pub ssim: SsimParams,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            stft: StftParams {
                hop: 8,
                ..StftParams::default()
            },
            margin_db: 8.0,
            gait: GaitParams::default(),
            steps: StepParams::default(),
            ssim: SsimParams::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        self.stft.validate()?;
        if !(self.margin_db >= 0.0 && self.margin_db.is_finite()) {
            return Err(Error::InvalidConfig(format!("margin_db {} must be >= 0", self.margin_db)));
        }
        self.gait.validate()?;
        if !(self.steps.db_floor < self.steps.db_ceil) {
            return Err(Error::InvalidConfig("steps.db_floor must be below steps.db_ceil".into()));
        }
        if !(self.steps.torso_factor > 0.0 && self.steps.search_radius >= 0.0) {
            return Err(Error::InvalidConfig("steps parameters must be positive".into()));
        }
        self.ssim.validate()
    }
}

/// Every intermediate product of analysing one measurement.
#[derive(Debug, Clone)]
pub struct Analysis {
    /// Denoised linear-power spectrogram.
    pub spectrogram: Spectrogram,
    pub envelope: Envelope,
    pub stats: GaitStats,
    pub window: StepWindow,
    pub initial: StepPair,
    pub refinement: Refinement,
    pub features: FeatureVector,
}

/// Runs the full chain on one DC-removed signal.
pub fn analyze(signal: &IqSignal, direction: Direction, config: &AnalysisConfig) -> Result<Analysis> {
    analyze_with(signal, direction, config, Exec::default())
}

pub fn analyze_with(signal: &IqSignal, direction: Direction, config: &AnalysisConfig, exec: Exec) -> Result<Analysis> {
    config.validate()?;
    let signal = signal.remove_dc();
    let raw = stft_spectrogram_with(&signal, &config.stft, exec)?;
    let spectrogram = denoise(&raw, config.margin_db)?;
    let (envelope, stats) = gait_stats(&spectrogram, direction, &config.gait)?;
    let window = select_four_step_window(&spectrogram, &envelope, &stats, &config.steps)?;
    let initial = extract_and_average(&window.image, window.step_frames, window.step_width)?;
    let refinement = refine_step_pair(&window, &initial, stats.f_step, spectrogram.frame_rate(), &config.steps)?;
    let mut features = feature_vector(&refinement.pair, &stats, &config.ssim)?;
    let mut flags = refinement.pair.flags.clone();
    for f in features.flags.drain(..) {
        raise(&mut flags, f);
    }
    features.flags = flags;
    Ok(Analysis {
        spectrogram,
        envelope,
        stats,
        window,
        initial,
        refinement,
        features,
    })
}

/// Walking direction from the sign of the dominant Doppler energy.
///
/// Bulk motion towards the radar puts the torso line and the legs at
/// positive frequencies, so the half-plane holding more denoised power wins.
pub fn infer_direction(signal: &IqSignal, config: &AnalysisConfig, exec: Exec) -> Result<Direction> {
    config.validate()?;
    let raw = stft_spectrogram_with(&signal.remove_dc(), &config.stft, exec)?;
    let spec = denoise(&raw, config.margin_db)?;
    let (mut toward, mut away) = (0.0, 0.0);
    for n in 0..spec.frames() {
        for (p, f) in spec.frame(n).iter().zip(&spec.freq_axis) {
            if *f > 0.0 {
                toward += p;
            } else if *f < 0.0 {
                away += p;
            }
        }
    }
    if toward + away == 0.0 {
        return Err(Error::Degenerate("no Doppler energy to infer a direction from".into()));
    }
    Ok(if toward >= away { Direction::Toward } else { Direction::Away })
}

/// Result of processing one measurement of a batch.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub subject: String,
    pub direction: Direction,
    pub label: Label,
    pub seed: u64,
    pub features: std::result::Result<FeatureVector, Error>,
}

impl Outcome {
    pub fn row(&self) -> Option<FeatureRow> {
        let features = self.features.as_ref().ok()?;
        Some(FeatureRow::new(&self.subject, self.direction, self.label, features.clone()))
    }
}

/// Simulates and analyses every planned measurement of a cohort without
/// keeping the raw signals.
pub fn cohort_features(cohort: &CohortSpec, config: &AnalysisConfig, exec: Exec) -> Result<Vec<Outcome>> {
    cohort.validate()?;
    config.validate()?;
    let plans = cohort.plan();
    let inner = if exec.is_parallel() { Exec::Sequential } else { exec };
    Ok(exec.map_slice(&plans, |p| {
        let features = synthesize_return(&p.walker, &p.radar)
            .and_then(|s| analyze_with(&s, p.direction, config, inner))
            .map(|a| a.features);
        Outcome {
            subject: p.subject_id.clone(),
            direction: p.direction,
            label: p.label,
            seed: p.seed,
            features,
        }
    }))
}

/// Feature rows of the successful outcomes.
pub fn feature_table(outcomes: &[Outcome]) -> Vec<FeatureRow> {
    outcomes.iter().filter_map(Outcome::row).collect()
}
