//! Aalen-Johansen cumulative incidence and length-of-stay medians.

mod aalen_johansen;
mod event_table;
mod median;

pub use aalen_johansen::{
    aalen_johansen, hfr_at_horizon, AalenJohansen, CifCurve, RiskAtHorizon, SurvivalCurve, Z_95,
};
pub use event_table::{build_event_table, EventTable, Observation};
pub use median::{
    median_los, median_los_for_cause, weighted_median_los, BootstrapConfig, LosSummary,
    MedianLosEstimate,
};
