//! Synthetic continuous-wave radar returns of walking people.
//!
//! A walker is a set of point scatterers: the torso moving at constant radial
//! speed and ten points along each leg (thigh, knee, shin, foot). A leg point
//! at relative height `h` below the hip moves at `v + h * (v_foot - v)`, so the
//! foot (`h = 1`) is at rest during stance and follows a raised-cosine velocity
//! pulse during swing. The two legs are half a gait cycle apart.
//!
//! Each scatterer contributes `a * exp(-j 4 pi R(t) / lambda)` to the baseband
//! return. Closing targets therefore produce positive Doppler.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Relative heights of the leg scatterers below the hip.
const LEG_POINTS: [f64; 10] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Share of the foot swing that reaches the knee and shin of a stiff leg.
const STIFF_KNEE_SWING: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Toward,
    Away,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Toward => "toward",
            Direction::Away => "away",
        }
    }

    /// Sign of the Doppler shift produced by bulk motion.
    pub fn doppler_sign(self) -> f64 {
        match self {
            Direction::Toward => 1.0,
            Direction::Away => -1.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Direction::Toward => 0,
            Direction::Away => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Direction::Toward),
            1 => Some(Direction::Away),
            _ => None,
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toward" => Ok(Direction::Toward),
            "away" => Ok(Direction::Away),
            other => Err(Error::InvalidConfig(format!("unknown direction `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Symmetric,
    Asymmetric,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Symmetric => "symmetric",
            Label::Asymmetric => "asymmetric",
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Asymmetric
    }

    pub fn code(self) -> u8 {
        match self {
            Label::Symmetric => 0,
            Label::Asymmetric => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Label::Symmetric),
            1 => Some(Label::Asymmetric),
            _ => None,
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(Label::Symmetric),
            "asymmetric" => Ok(Label::Asymmetric),
            other => Err(Error::InvalidConfig(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Leg {
    Left,
    Right,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadarConfig {
    pub carrier_frequency: f64,
    pub sampling_frequency: f64,
    pub duration: f64,
    /// Ratio of mean signal power to noise power in dB. `inf` disables noise.
    pub snr_db: f64,
    pub rng_seed: u64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            carrier_frequency: 24.0e9,
            sampling_frequency: 2560.0,
            duration: 6.0,
            snr_db: 20.0,
            rng_seed: 0,
        }
    }
}

impl RadarConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("carrier_frequency", self.carrier_frequency)?;
        positive("sampling_frequency", self.sampling_frequency)?;
        positive("duration", self.duration)?;
        if self.snr_db.is_nan() {
            return Err(Error::InvalidConfig("snr_db is NaN".into()));
        }
        if self.num_samples() == 0 {
            return Err(Error::InvalidConfig("duration yields zero samples".into()));
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        (self.sampling_frequency * self.duration).round() as usize
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_frequency
    }

    /// Two-way Doppler shift of a scatterer closing at `speed` m/s.
    pub fn doppler(&self, speed: f64) -> f64 {
        2.0 * speed / self.wavelength()
    }
}

/// Relative reflectivity of each body part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScattererAmplitudes {
    pub torso: f64,
    pub thigh: f64,
    pub knee: f64,
    pub shin: f64,
    pub foot: f64,
}

impl Default for ScattererAmplitudes {
    fn default() -> Self {
        Self {
            torso: 1.0,
            thigh: 0.3,
            knee: 0.3,
            shin: 0.25,
            foot: 0.25,
        }
    }
}

impl ScattererAmplitudes {
    fn of(&self, part: BodyPart) -> f64 {
        match part {
            BodyPart::Torso => self.torso,
            BodyPart::Thigh => self.thigh,
            BodyPart::Knee => self.knee,
            BodyPart::Shin => self.shin,
            BodyPart::Foot => self.foot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WalkerConfig {
    /// Bulk walking speed along the line of sight, m/s.
    pub torso_speed: f64,
    /// Steps per second (two steps per gait cycle).
    pub step_rate: f64,
    pub direction: Direction,
    pub start_range: f64,
    /// Peak swing speed of the affected foot relative to the other foot.
    pub asymmetry_factor: f64,
    /// Relative lengthening of the affected leg's swing phase.
    pub duty_asymmetry: f64,
    /// Stiff knee on the affected leg: knee and shin only partially follow the swing.
    pub knee_mode: bool,
    pub affected_leg: Leg,
    /// Peak foot speed over torso speed.
    pub foot_speed_ratio: f64,
    /// Fraction of the gait cycle a healthy foot spends swinging.
    pub swing_fraction: f64,
    /// Relative standard deviation of each swing's peak speed.
    pub stride_variability: f64,
    pub variability_seed: u64,
    /// Gait cycle phase at t = 0, in cycles.
    pub start_phase: f64,
    pub scatterer_amplitudes: ScattererAmplitudes,
}

impl Default for WalkerConfig {
    fn default() -> Self {
        Self {
            torso_speed: 1.0,
            step_rate: 1.8,
            direction: Direction::Toward,
            start_range: 4.0,
            asymmetry_factor: 1.0,
            duty_asymmetry: 0.0,
            knee_mode: false,
            affected_leg: Leg::Right,
            foot_speed_ratio: 3.0,
            swing_fraction: 0.4,
            stride_variability: 0.0,
            variability_seed: 0,
            start_phase: 0.0,
            scatterer_amplitudes: ScattererAmplitudes::default(),
        }
    }
}

impl WalkerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.torso_speed.is_finite() && self.torso_speed > 0.0) {
            return bad(format!("torso_speed must be positive, got {}", self.torso_speed));
        }
        if !(self.step_rate.is_finite() && self.step_rate > 0.0) {
            return bad(format!("step_rate must be positive, got {}", self.step_rate));
        }
        if !(self.asymmetry_factor > 0.0 && self.asymmetry_factor <= 1.0) {
            return bad(format!(
                "asymmetry_factor must lie in (0, 1], got {}",
                self.asymmetry_factor
            ));
        }
        if !(self.start_range.is_finite() && self.start_range > 0.0) {
            return bad(format!("start_range must be positive, got {}", self.start_range));
        }
        if !(self.duty_asymmetry.is_finite() && self.duty_asymmetry >= 0.0) {
            return bad(format!("duty_asymmetry must be >= 0, got {}", self.duty_asymmetry));
        }
        if !(self.foot_speed_ratio.is_finite() && self.foot_speed_ratio >= 1.0) {
            return bad(format!("foot_speed_ratio must be >= 1, got {}", self.foot_speed_ratio));
        }
        let longest_swing = self.swing_fraction * (1.0 + self.duty_asymmetry);
        if !(self.swing_fraction > 0.0 && longest_swing < 1.0) {
            return bad(format!(
                "swing phase must be a proper fraction of the gait cycle, got {longest_swing}"
            ));
        }
        if !(self.stride_variability.is_finite() && (0.0..0.3).contains(&self.stride_variability))
        {
            return bad(format!(
                "stride_variability must lie in [0, 0.3), got {}",
                self.stride_variability
            ));
        }
        Ok(())
    }

    pub fn cycle_period(&self) -> f64 {
        2.0 / self.step_rate
    }

    fn leg_rho(&self, leg: Leg) -> f64 {
        if leg == self.affected_leg {
            self.asymmetry_factor
        } else {
            1.0
        }
    }

    fn swing_duration(&self, leg: Leg) -> f64 {
        let stretch = if leg == self.affected_leg {
            1.0 + self.duty_asymmetry
        } else {
            1.0
        };
        self.swing_fraction * stretch * self.cycle_period()
    }

    /// Nominal peak foot speed of `leg`, m/s.
    pub fn peak_foot_speed(&self, leg: Leg) -> f64 {
        self.foot_speed_ratio * self.torso_speed * self.leg_rho(leg)
    }

    /// Largest radial speed of any scatterer, ignoring stride variability.
    pub fn peak_speed(&self) -> f64 {
        self.peak_foot_speed(Leg::Left)
            .max(self.peak_foot_speed(Leg::Right))
            .max(self.torso_speed)
    }

    /// Times of maximal swing speed of one leg inside `[0, duration]`.
    pub fn swing_peak_times(&self, leg: Leg, duration: f64) -> Vec<f64> {
        let foot = FootMotion::new(self, leg, duration);
        foot.swings
            .iter()
            .map(|s| s.start + 0.5 * s.duration)
            .filter(|&t| (0.0..=duration).contains(&t))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BodyPart {
    Torso,
    Thigh,
    Knee,
    Shin,
    Foot,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub part: BodyPart,
    pub leg: Option<Leg>,
    pub amplitude: f64,
    /// Radial range at each requested time, m.
    pub ranges: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
struct Swing {
    start: f64,
    duration: f64,
    peak: f64,
}

/// Swing schedule of one foot covering a time interval.
#[derive(Debug, Clone)]
struct FootMotion {
    swings: Vec<Swing>,
}

impl FootMotion {
    fn new(walker: &WalkerConfig, leg: Leg, duration: f64) -> Self {
        let period = walker.cycle_period();
        let offset = match leg {
            Leg::Left => 0.0,
            Leg::Right => 0.5,
        };
        let swing_duration = walker.swing_duration(leg);
        let peak = walker.peak_foot_speed(leg);
        let leg_salt = match leg {
            Leg::Left => 0x9e37_79b9_7f4a_7c15,
            Leg::Right => 0xc2b2_ae3d_27d4_eb4f,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(walker.variability_seed ^ leg_salt);
        let phase = walker.start_phase.rem_euclid(1.0);
        let first = (offset - phase) * period - period;
        let count = (duration / period).ceil() as usize + 3;
        let swings = (0..count)
            .map(|j| {
                let z: f64 = rng.sample(StandardNormal);
                Swing {
                    start: first + j as f64 * period,
                    duration: swing_duration,
                    peak: peak * (1.0 + walker.stride_variability * z).max(0.1),
                }
            })
            .collect();
        Self { swings }
    }

    fn velocity(&self, t: f64) -> f64 {
        self.swings
            .iter()
            .find(|s| t >= s.start && t < s.start + s.duration)
            .map(|s| 0.5 * s.peak * (1.0 - (2.0 * PI * (t - s.start) / s.duration).cos()))
            .unwrap_or(0.0)
    }

    /// Distance covered by the foot since the first scheduled swing.
    fn displacement(&self, t: f64) -> f64 {
        self.swings
            .iter()
            .map(|s| {
                let tau = (t - s.start).clamp(0.0, s.duration);
                0.5 * s.peak * (tau - s.duration / (2.0 * PI) * (2.0 * PI * tau / s.duration).sin())
            })
            .sum()
    }
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::NonMonotoneTimes);
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::NonMonotoneTimes);
    }
    Ok(())
}

struct LegPoint {
    part: BodyPart,
    height: f64,
    /// Share of the foot swing this point follows.
    swing_share: f64,
    amplitude: f64,
}

fn part_at(height: f64) -> BodyPart {
    match height {
        h if h < 0.45 => BodyPart::Thigh,
        h if h < 0.55 => BodyPart::Knee,
        h if h < 0.95 => BodyPart::Shin,
        _ => BodyPart::Foot,
    }
}

fn leg_points(walker: &WalkerConfig, leg: Leg) -> Vec<LegPoint> {
    LEG_POINTS
        .iter()
        .map(|&height| {
            let part = part_at(height);
            let amplitude = walker.scatterer_amplitudes.of(part);
            let stiff = walker.knee_mode
                && leg == walker.affected_leg
                && matches!(part, BodyPart::Knee | BodyPart::Shin);
            LegPoint {
                part,
                height,
                swing_share: if stiff { STIFF_KNEE_SWING } else { 1.0 },
                amplitude,
            }
        })
        .collect()
}

/// Radial range of every scatterer at the requested times.
///
/// A leg point at height `h` covers `(1 - h) * v * t + h * share * d_foot(t)`,
/// where `d_foot` is the integrated raised-cosine swing velocity.
pub fn scatterer_trajectories(walker: &WalkerConfig, times: &[f64]) -> Result<Vec<Trajectory>> {
    walker.validate()?;
    check_times(times)?;
    let horizon = times.last().copied().unwrap_or(0.0);
    let sign = walker.direction.doppler_sign();
    let v = walker.torso_speed;
    let range_of = |distance: f64| walker.start_range - sign * distance;

    let mut out = vec![Trajectory {
        part: BodyPart::Torso,
        leg: None,
        amplitude: walker.scatterer_amplitudes.torso,
        ranges: times.iter().map(|&t| range_of(v * t)).collect(),
    }];
    for leg in [Leg::Left, Leg::Right] {
        let foot = FootMotion::new(walker, leg, horizon);
        let origin = foot.displacement(0.0);
        let foot_distance: Vec<f64> = times
            .iter()
            .map(|&t| foot.displacement(t) - origin)
            .collect();
        for point in leg_points(walker, leg) {
            let h = point.height;
            let ranges = times
                .iter()
                .zip(&foot_distance)
                .map(|(&t, &d)| range_of((1.0 - h) * v * t + h * point.swing_share * d))
                .collect();
            out.push(Trajectory {
                part: point.part,
                leg: Some(leg),
                amplitude: point.amplitude,
                ranges,
            });
        }
    }
    Ok(out)
}

/// Foot radial speed of `leg` at the given times (for inspection and tests).
pub fn foot_velocity(walker: &WalkerConfig, leg: Leg, times: &[f64]) -> Result<Vec<f64>> {
    walker.validate()?;
    check_times(times)?;
    let horizon = times.last().copied().unwrap_or(0.0);
    let foot = FootMotion::new(walker, leg, horizon);
    Ok(times.iter().map(|&t| foot.velocity(t)).collect())
}

/// Complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSignal {
    pub samples: Vec<Complex64>,
    pub sampling_frequency: f64,
}

impl IqSignal {
    pub fn new(samples: Vec<Complex64>, sampling_frequency: f64) -> Result<Self> {
        if !(sampling_frequency.is_finite() && sampling_frequency > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sampling frequency must be positive, got {sampling_frequency}"
            )));
        }
        if samples.iter().any(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(Error::InvalidConfig("non-finite sample".into()));
        }
        Ok(Self {
            samples,
            sampling_frequency,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sampling_frequency
    }

    /// Copy with the sample mean subtracted.
    pub fn remove_dc(&self) -> Self {
        if self.samples.is_empty() {
            return self.clone();
        }
        let mean = self.samples.iter().sum::<Complex64>() / self.samples.len() as f64;
        Self {
            samples: self.samples.iter().map(|s| s - mean).collect(),
            sampling_frequency: self.sampling_frequency,
        }
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sampling_frequency: self.sampling_frequency,
        }
    }

    /// Adds circularly symmetric white Gaussian noise at `snr_db` relative to
    /// the mean signal power. Infinite SNR leaves the signal unchanged.
    pub fn add_noise(&mut self, snr_db: f64, seed: u64) {
        if snr_db == f64::INFINITY || self.samples.is_empty() {
            return;
        }
        let power = self.samples.iter().map(|s| s.norm_sqr()).sum::<f64>() / self.len() as f64;
        let sigma = (power / 10f64.powf(snr_db / 10.0) / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in &mut self.samples {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *s += Complex64::new(re, im) * sigma;
        }
    }
}

/// Peak Doppler the walker is expected to produce, Hz.
pub fn predicted_peak_doppler(walker: &WalkerConfig, radar: &RadarConfig) -> f64 {
    radar.doppler(walker.peak_speed())
}

/// Synthesizes the baseband return of one walk.
pub fn synthesize_return(walker: &WalkerConfig, radar: &RadarConfig) -> Result<IqSignal> {
    radar.validate()?;
    walker.validate()?;
    let nyquist = radar.sampling_frequency / 2.0;
    let peak = predicted_peak_doppler(walker, radar);
    if peak >= nyquist {
        return Err(Error::Aliasing {
            doppler_hz: peak,
            nyquist_hz: nyquist,
        });
    }
    let n = radar.num_samples();
    let times: Vec<f64> = (0..n).map(|i| i as f64 / radar.sampling_frequency).collect();
    let trajectories = scatterer_trajectories(walker, &times)?;
    let k = 4.0 * PI / radar.wavelength();
    let mut samples = vec![Complex64::new(0.0, 0.0); n];
    for tr in &trajectories {
        for (s, &r) in samples.iter_mut().zip(&tr.ranges) {
            *s += Complex64::from_polar(tr.amplitude, -k * r);
        }
    }
    let mut signal = IqSignal::new(samples, radar.sampling_frequency)?;
    signal.add_noise(radar.snr_db, radar.rng_seed);
    Ok(signal)
}

/// Single point target closing at constant `speed` (negative: receding).
pub fn constant_velocity_return(speed: f64, radar: &RadarConfig, amplitude: f64) -> Result<IqSignal> {
    radar.validate()?;
    let k = 4.0 * PI / radar.wavelength();
    let samples = (0..radar.num_samples())
        .map(|i| {
            let t = i as f64 / radar.sampling_frequency;
            Complex64::from_polar(amplitude, k * speed * t)
        })
        .collect();
    let mut signal = IqSignal::new(samples, radar.sampling_frequency)?;
    signal.add_noise(radar.snr_db, radar.rng_seed);
    Ok(signal)
}

/// Gait pattern imposed on a healthy subject for "simulated asymmetric" walks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimpSpec {
    pub asymmetry_factor: f64,
    pub duty_asymmetry: f64,
    pub knee_mode: bool,
}

impl Default for LimpSpec {
    fn default() -> Self {
        Self {
            asymmetry_factor: 0.65,
            duty_asymmetry: 0.1,
            knee_mode: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubjectSpec {
    pub id: String,
    /// Label of the subject's natural gait.
    pub label: Label,
    #[serde(default)]
    pub walker: WalkerConfig,
    pub toward: usize,
    pub away: usize,
    /// Adds the same number of asymmetric walks with this gait pattern.
    #[serde(default)]
    pub simulated_limp: Option<LimpSpec>,
    /// Relative spread of speed and cadence between repeated walks.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSpec {
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub radar: RadarConfig,
    #[serde(default)]
    pub subjects: Vec<SubjectSpec>,
}

impl CohortSpec {
    pub fn validate(&self) -> Result<()> {
        self.radar.validate()?;
        let mut seen = std::collections::HashSet::new();
        for s in &self.subjects {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateSubject(s.id.clone()));
            }
            if s.id.is_empty() {
                return Err(Error::InvalidConfig("empty subject id".into()));
            }
            s.walker.validate()?;
            if !(0.0..0.5).contains(&s.jitter) {
                return Err(Error::InvalidConfig(format!(
                    "jitter of subject {} must lie in [0, 0.5)",
                    s.id
                )));
            }
        }
        Ok(())
    }

    /// Measurement plan in deterministic order.
    pub fn plan(&self) -> Vec<MeasurementPlan> {
        let mut plans = Vec::new();
        for subject in &self.subjects {
            let mut variants = vec![(subject.label, None)];
            if let Some(limp) = &subject.simulated_limp {
                variants.push((Label::Asymmetric, Some(limp)));
            }
            for (label, limp) in variants {
                for (direction, count) in [
                    (Direction::Toward, subject.toward),
                    (Direction::Away, subject.away),
                ] {
                    for repeat in 0..count {
                        let index = plans.len() as u64;
                        let seed = derive_seed(self.master_seed, index);
                        let mut walker = subject.walker.clone();
                        walker.direction = direction;
                        if let Some(limp) = limp {
                            walker.asymmetry_factor = limp.asymmetry_factor;
                            walker.duty_asymmetry = limp.duty_asymmetry;
                            walker.knee_mode = limp.knee_mode;
                        }
                        jitter_walker(&mut walker, subject.jitter, seed);
                        let mut radar = self.radar.clone();
                        radar.rng_seed = derive_seed(seed, 1);
                        plans.push(MeasurementPlan {
                            subject_id: subject.id.clone(),
                            label,
                            direction,
                            repeat,
                            seed,
                            walker,
                            radar,
                        });
                    }
                }
            }
        }
        plans
    }
}

fn jitter_walker(walker: &mut WalkerConfig, jitter: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let factor = |rng: &mut ChaCha8Rng| {
        let z: f64 = rng.sample(StandardNormal);
        (1.0 + jitter * z.clamp(-2.5, 2.5)).max(0.5)
    };
    walker.torso_speed *= factor(&mut rng);
    walker.step_rate *= factor(&mut rng);
    walker.start_phase = rng.random::<f64>();
    walker.variability_seed = derive_seed(seed, 3);
}

/// Fully resolved parameters of one simulated walk.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementPlan {
    pub subject_id: String,
    pub label: Label,
    pub direction: Direction,
    pub repeat: usize,
    pub seed: u64,
    pub walker: WalkerConfig,
    pub radar: RadarConfig,
}

#[derive(Debug, Clone)]
pub struct Measurement {
    pub signal: IqSignal,
    pub label: Label,
    pub subject_id: String,
    pub direction: Direction,
    pub seed: u64,
}

/// Generates every planned measurement of a cohort.
pub fn make_dataset(cohort: &CohortSpec, exec: Exec) -> Result<Vec<Measurement>> {
    cohort.validate()?;
    let plans = cohort.plan();
    exec.map_slice(&plans, |p| {
        synthesize_return(&p.walker, &p.radar).map(|signal| Measurement {
            signal,
            label: p.label,
            subject_id: p.subject_id.clone(),
            direction: p.direction,
            seed: p.seed,
        })
    })
    .into_iter()
    .collect()
}

/// Cohort of `healthy` symmetric subjects, each also walking with a simulated
/// limp, plus one asymmetric subject per entry of `patients`. Subject traits
/// are drawn from `master_seed`; every subject walks `walks` times per
/// direction and gait variant.
pub fn reference_cohort(master_seed: u64, healthy: usize, patients: &[LimpSpec], walks: usize) -> CohortSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(master_seed, u64::MAX));
    let walker = |rng: &mut ChaCha8Rng| WalkerConfig {
        torso_speed: rng.random_range(0.8..1.2),
        step_rate: rng.random_range(1.6..2.0),
        foot_speed_ratio: rng.random_range(2.7..3.3),
        affected_leg: if rng.random::<bool>() { Leg::Left } else { Leg::Right },
        stride_variability: 0.08,
        ..WalkerConfig::default()
    };
    let mut subjects = Vec::new();
    for i in 0..healthy {
        let mut walker = walker(&mut rng);
        // nobody walks perfectly symmetrically
        walker.asymmetry_factor = rng.random_range(0.95..1.0);
        // every third subject imitates a stiff knee rather than a weak swing
        let knee_mode = i % 3 == 2;
        let limp = LimpSpec {
            asymmetry_factor: if knee_mode {
                rng.random_range(0.85..1.0)
            } else {
                rng.random_range(0.55..0.85)
            },
            duty_asymmetry: rng.random_range(0.05..0.15),
            knee_mode,
        };
        subjects.push(SubjectSpec {
            id: format!("H{:02}", i + 1),
            label: Label::Symmetric,
            walker,
            toward: walks,
            away: walks,
            simulated_limp: Some(limp),
            jitter: default_jitter(),
        });
    }
    for (i, limp) in patients.iter().enumerate() {
        let mut walker = walker(&mut rng);
        walker.asymmetry_factor = limp.asymmetry_factor;
        walker.duty_asymmetry = limp.duty_asymmetry;
        walker.knee_mode = limp.knee_mode;
        subjects.push(SubjectSpec {
            id: format!("P{:02}", i + 1),
            label: Label::Asymmetric,
            walker,
            toward: walks,
            away: walks,
            simulated_limp: None,
            jitter: default_jitter(),
        });
    }
    CohortSpec {
        master_seed,
        radar: RadarConfig::default(),
        subjects,
    }
}

/// SplitMix64 finalizer used to derive independent child seeds.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master
        .wrapping_add(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(index.wrapping_mul(0xbf58_476d_1ce4_e5b9));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
