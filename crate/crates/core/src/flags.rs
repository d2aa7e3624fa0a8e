use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::features::Feature;

/// Non-fatal quality issues raised while analysing one measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// A step extraction reached past the window edge and was zero-padded.
    ZeroPadded,
    /// Registration would have moved a step outside the window.
    RefinementOutOfWindow,
    /// Best registration score too low to trust; initial step time kept.
    WeakCorrelation,
    /// Zero-variance template or patch in the correlation profile.
    UndefinedCorrelation,
    /// Feature could not be computed and was imputed as 0.
    Undefined(Feature),
}

impl fmt::Display for Flag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Flag::ZeroPadded => f.write_str("zero_padded"),
            Flag::RefinementOutOfWindow => f.write_str("refinement_out_of_window"),
            Flag::WeakCorrelation => f.write_str("weak_correlation"),
            Flag::UndefinedCorrelation => f.write_str("undefined_correlation"),
            Flag::Undefined(feature) => write!(f, "undefined_{}", feature.name()),
        }
    }
}

impl FromStr for Flag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "zero_padded" => Ok(Flag::ZeroPadded),
            "refinement_out_of_window" => Ok(Flag::RefinementOutOfWindow),
            "weak_correlation" => Ok(Flag::WeakCorrelation),
            "undefined_correlation" => Ok(Flag::UndefinedCorrelation),
            other => other
                .strip_prefix("undefined_")
                .and_then(Feature::from_name)
                .map(Flag::Undefined)
                .ok_or_else(|| Error::Format(format!("unknown flag `{other}`"))),
        }
    }
}

/// Adds `flag` unless already present, keeping first-seen order.
pub fn raise(flags: &mut Vec<Flag>, flag: Flag) {
    if !flags.contains(&flag) {
        flags.push(flag);
    }
}

/// `;`-joined flag names, empty when clean.
pub fn join(flags: &[Flag]) -> String {
    flags
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(";")
}

/// Inverse of [`join`].
pub fn split(text: &str) -> Result<Vec<Flag>, Error> {
    text.split(';').filter(|t| !t.is_empty()).map(str::parse).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_round_trip_through_text() {
        let mut flags = vec![Flag::ZeroPadded, Flag::RefinementOutOfWindow, Flag::WeakCorrelation, Flag::UndefinedCorrelation];
        flags.extend(Feature::ALL.map(Flag::Undefined));
        assert_eq!(split(&join(&flags)).unwrap(), flags);
        assert!(split("").unwrap().is_empty());
        assert!(split("zero_padded;bogus").is_err());
    }
}
