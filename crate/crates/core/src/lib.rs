//! Sepsis detection and prediction from routinely charted ICU vital signs.
//!
//! The pipeline runs raw per-admission measurement streams through hourly
//! binning and imputation ([`cohort`]), gold-standard hour labeling and
//! rule-based severity scores ([`gold`]), 30-element temporal feature vectors
//! ([`features`]), four base classifiers ([`models`]), probability-level
//! ensembles ([`ensemble`]) and ROC/AUC evaluation harnesses ([`eval`]).
//! [`synth`] generates seeded cohorts with planted sepsis trajectories so the
//! whole chain can be exercised without credentialed clinical data.

pub mod cohort;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod eval;
pub mod features;
pub mod gold;
pub mod models;
pub mod pipeline;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
