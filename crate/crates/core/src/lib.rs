//! Gait asymmetry detection from continuous-wave radar micro-Doppler
//! signatures: simulation, time-frequency analysis, gait statistics, step
//! signature extraction, similarity features and logistic detection.

// `!(a < b)` deliberately treats NaN as invalid
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod exec;
pub mod features;
pub mod flags;
pub mod gaitparams;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod sim;
pub mod stepext;
pub mod tfa;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
