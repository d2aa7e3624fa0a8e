//! Pipeline configuration file (TOML). Every section is optional and unknown
//! keys are rejected.

use std::path::Path;

use gaitasym::model::Scenario;
use gaitasym::pipeline::AnalysisConfig;
use gaitasym::sim::{reference_cohort, CohortSpec, LimpSpec, RadarConfig, SubjectSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub cohort: CohortConfig,
    pub analysis: AnalysisConfig,
    pub model: ModelConfig,
    pub export: ExportConfig,
}

/// Simulated dataset: a generated reference cohort, explicit subjects, or
/// both. With neither, the default reference cohort is used.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortConfig {
    pub master_seed: u64,
    pub radar: RadarConfig,
    pub reference: Option<ReferenceCohort>,
    pub subjects: Vec<SubjectSpec>,
}

/// Healthy subjects, each with a simulated limp, plus fixed patients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceCohort {
    pub healthy: usize,
    /// Walks per direction and gait variant.
    pub walks: usize,
    pub patients: Vec<LimpSpec>,
}

impl Default for ReferenceCohort {
    fn default() -> Self {
        let weak = |rho| LimpSpec {
            asymmetry_factor: rho,
            duty_asymmetry: 0.1,
            knee_mode: false,
        };
        Self {
            healthy: 10,
            walks: 10,
            patients: vec![
                weak(0.6),
                weak(0.7),
                weak(0.8),
                LimpSpec {
                    asymmetry_factor: 1.0,
                    duty_asymmetry: 0.05,
                    knee_mode: true,
                },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Scenario fitted by `select`.
    pub scenario: Scenario,
    /// Largest training false-alarm rate allowed when choosing the threshold.
    pub fa_bound: f64,
    /// Scenarios evaluated by `evaluate`.
    pub evaluate: Vec<Scenario>,
    /// Subjects held out in turn by `evaluate`; empty means all.
    pub held_out: Vec<String>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Toward,
            fa_bound: 0.1,
            evaluate: vec![Scenario::Toward, Scenario::Away],
            held_out: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    /// dB range (relative to the maximum) mapped onto the spectrogram image.
    pub db_floor: f64,
    pub db_ceil: f64,
    /// Spectrogram CSV keeps bins with `|f|` up to this frequency.
    pub csv_max_freq_hz: f64,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            db_floor: -60.0,
            db_ceil: 0.0,
            csv_max_freq_hz: 500.0,
        }
    }
}

impl CohortConfig {
    pub fn to_spec(&self) -> CohortSpec {
        let mut spec = match (&self.reference, self.subjects.is_empty()) {
            (Some(r), _) => reference_cohort(self.master_seed, r.healthy, &r.patients, r.walks),
            (None, true) => {
                let r = ReferenceCohort::default();
                reference_cohort(self.master_seed, r.healthy, &r.patients, r.walks)
            }
            (None, false) => CohortSpec {
                master_seed: self.master_seed,
                radar: RadarConfig::default(),
                subjects: Vec::new(),
            },
        };
        spec.radar = self.radar.clone();
        spec.subjects.extend(self.subjects.iter().cloned());
        spec
    }
}

impl PipelineConfig {
    /// Reads and validates a config file, or returns the validated defaults.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let config = match path {
            None => Self::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", p.display())))?;
                Self::parse(&text)?
            }
        };
        config.validate()?;
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |m: &str| Err(CliError::Validation(m.to_string()));
        self.cohort.to_spec().validate()?;
        self.analysis.validate()?;
        if !(0.0..1.0).contains(&self.model.fa_bound) {
            return invalid("model.fa_bound must lie in [0, 1)");
        }
        if self.model.evaluate.is_empty() {
            return invalid("model.evaluate must name at least one scenario");
        }
        if !(self.export.db_floor < self.export.db_ceil) {
            return invalid("export.db_floor must be below export.db_ceil");
        }
        if !(self.export.csv_max_freq_hz > 0.0) {
            return invalid("export.csv_max_freq_hz must be positive");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(PipelineConfig::parse("").unwrap(), PipelineConfig::default());
        assert_eq!(PipelineConfig::default().cohort.to_spec().plan().len(), 480);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["bogus = 1", "[model]\nfa = 0.1", "[cohort.radar]\nsnr = 3", "[analysis.stft]\nwindow = 3"] {
            assert!(matches!(PipelineConfig::parse(text), Err(CliError::Validation(_))), "{text}");
        }
    }

    #[test]
    fn explicit_subjects_replace_the_default_reference() {
        let c = PipelineConfig::parse("[[cohort.subjects]]\nid = \"A\"\nlabel = \"symmetric\"\ntoward = 1\naway = 2").unwrap();
        assert_eq!(c.cohort.to_spec().plan().len(), 3);
        let c = PipelineConfig::parse("[cohort.reference]\nhealthy = 1\nwalks = 1\npatients = []").unwrap();
        assert_eq!(c.cohort.to_spec().plan().len(), 4);
    }

    #[test]
    fn hash_tracks_every_setting() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.cohort.master_seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
    }

    #[test]
    fn out_of_range_values_fail_validation() {
        let mut c = PipelineConfig::default();
        c.model.fa_bound = 1.5;
        assert!(c.validate().is_err());
        let mut c = PipelineConfig::default();
        c.analysis.margin_db = -2.0;
        assert!(c.validate().is_err());
    }
}
