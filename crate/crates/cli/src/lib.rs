//! Command implementations behind the `crivet` binary. Each command reads its
//! inputs, calls the library and writes CSV/JSON files into the output
//! directory; no statistics are computed here.

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{cmd_cif, cmd_fit, cmd_preprocess, cmd_sensitivity, cmd_simulate};
pub use config::{Overrides, Preset, RunConfig};
pub use error::{CliError, Result};

/// File names written into the output directory.
pub mod files {
    pub const ANALYSIS: &str = "analysis.csv";
    pub const REJECTIONS: &str = "rejections.csv";
    pub const CIF_SUMMARY: &str = "cif_summary.csv";
    pub const CIF_CURVES: &str = "cif_curves.csv";
    pub const HAZARD_RATIOS: &str = "hazard_ratios.csv";
    pub const MODEL: &str = "model.json";
    pub const PREDICTED_CIF: &str = "predicted_cif.csv";
    pub const SENSITIVITY: &str = "sensitivity.csv";
    pub const COHORT: &str = "cohort.csv";
    pub const TRUTH: &str = "truth.csv";
    pub const SIMULATION: &str = "simulation.json";
}
