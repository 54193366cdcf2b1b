//! Competing-risks survival analysis for hospital admission cohorts.
//!
//! The crate is organised around the analysis pipeline:
//!
//! - [`cohort`]: ingest linked admission records, derive covariates, apply the
//!   90-day censoring and palliative-discharge rules.
//! - [`nonparametric`]: Aalen-Johansen cumulative incidence, fatality risk at a
//!   horizon and median length of stay per cause.
//! - [`fine_gray`]: stratified Fine-Gray subdistribution-hazard regression
//!   fitted by Newton-Raphson on the IPCW-weighted partial likelihood.
//! - [`sensitivity`]: refits under backwards shifts of symptom onset for deaths.
//! - [`synth`]: seeded synthetic cohorts with known subdistribution hazards.

pub mod cohort;
pub mod error;
pub mod fine_gray;
pub mod nonparametric;
pub mod rng;
pub mod sensitivity;
pub mod synth;

pub use error::{Error, ErrorClass, FitDiagnostics, Result};
