//! Stratified Fine-Gray regression of the subdistribution hazard of death.
//!
//! Subjects discharged before a death time stay in its risk set with weight
//! `G(t-) / G(T_i-)`, where `G` is the Kaplan-Meier estimate of the censoring
//! distribution (per stratum when a stratum has enough censorings, pooled
//! otherwise). Ties use the Breslow form.

mod censoring_km;
mod design;
mod fit;
mod hazard_ratio;
mod likelihood;

pub use censoring_km::{fg_weight, CensoringKm};
pub use design::{column_name, DesignMatrix};
pub use fit::{
    fit_fine_gray, fit_prepared, FgModel, StratumBaseline, LOGLIK_TOLERANCE, MAX_ITERATIONS,
    MAX_STEP_HALVINGS, SCORE_TOLERANCE, SEPARATION_BOUND,
};
pub use hazard_ratio::{hazard_ratios, HazardRatioRow, HazardRatioTable, REFERENCE_DISPLAY};
pub use likelihood::{fg_log_partial_likelihood, FgData, LikelihoodEval, MIN_STRATUM_CENSORINGS};
