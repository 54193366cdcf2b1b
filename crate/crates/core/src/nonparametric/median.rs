use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::aalen_johansen::incidence_and_survival;
use super::{CifCurve, EventTable, Observation};
use crate::cohort::{AnalysisRecord, EventCause};
use crate::error::{Error, Result};
use crate::rng::{Domain, StreamFamily};

/// Relative tolerance for deciding that the CIF sits exactly on half its mass.
const HALF_MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianLosEstimate {
    pub cause: EventCause,
    pub median_days: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Bootstrap replicates with at least one event of the cause.
    pub replicates_used: usize,
}

impl MedianLosEstimate {
    /// `5.6 (5.5 - 5.6)`
    pub fn display(&self) -> String {
        format!(
            "{:.1} ({:.1} - {:.1})",
            self.median_days, self.ci_lower, self.ci_upper
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: 500,
            seed: 0,
        }
    }
}

fn median_of_values(times: &[f64], values: &[f64]) -> Option<f64> {
    let total = *values.last()?;
    if total <= 0.0 {
        return None;
    }
    let half = 0.5 * total;
    let tol = HALF_MASS_TOLERANCE * total;
    let j = values.partition_point(|&v| v < half - tol);
    if (values[j] - half).abs() > tol {
        return Some(times[j]);
    }
    // Exactly half the mass by t_j: average with the next jump of this cause.
    let next = (j + 1..values.len()).find(|&k| values[k] > values[j]);
    Some(next.map_or(times[j], |k| 0.5 * (times[j] + times[k])))
}

/// Median of the cause-conditional time distribution `C(t) / C(t_max)`.
/// When the curve reaches exactly half its mass at a jump, the median is the
/// midpoint between that jump and the next one.
pub fn weighted_median_los(cif: &CifCurve) -> Result<f64> {
    median_of_values(&cif.times, &cif.values).ok_or(Error::NoEventsOfCause(cif.cause.name()))
}

/// Type-7 sample quantile of sorted data.
fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median length of stay for both causes; `None` where a cause has no events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LosSummary {
    pub death: Option<MedianLosEstimate>,
    pub discharge: Option<MedianLosEstimate>,
}

/// Death and discharge medians of one bootstrap replicate.
type Replicate = (Option<f64>, Option<f64>);

/// Medians for both causes with percentile intervals from a nonparametric
/// bootstrap over subjects. Replicate `b` draws from its own stream, so the
/// result does not depend on thread count.
pub fn median_los(records: &[AnalysisRecord], config: &BootstrapConfig) -> Result<LosSummary> {
    let mut obs: Vec<Observation> = records.iter().map(Observation::from).collect();
    let table = EventTable::from_observations(&obs)?;
    obs.sort_by(Observation::canonical_cmp);
    let (_, death, discharge) = incidence_and_survival(&table);
    let point_death = median_of_values(&table.times, &death);
    let point_discharge = median_of_values(&table.times, &discharge);

    let family = StreamFamily::new(config.seed, Domain::Bootstrap);
    let n = obs.len();
    let replicates: Vec<Replicate> = (0..config.replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = family.stream(b);
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rng.gen_range(0..n)] += 1;
            }
            let resampled = obs.iter().zip(&counts).map(|(o, &c)| Observation {
                weight: o.weight * c as f64,
                ..*o
            });
            let t = EventTable::from_sorted(resampled);
            let (_, d, e) = incidence_and_survival(&t);
            (
                median_of_values(&t.times, &d),
                median_of_values(&t.times, &e),
            )
        })
        .collect();

    let summarise = |cause: EventCause, point: Option<f64>, pick: fn(&Replicate) -> Option<f64>| {
        let median_days = point?;
        let mut draws: Vec<f64> = replicates.iter().filter_map(pick).collect();
        draws.sort_by(f64::total_cmp);
        let (lo, hi) = if draws.is_empty() {
            (median_days, median_days)
        } else {
            (
                quantile_sorted(&draws, 0.025),
                quantile_sorted(&draws, 0.975),
            )
        };
        Some(MedianLosEstimate {
            cause,
            median_days,
            ci_lower: lo.min(median_days),
            ci_upper: hi.max(median_days),
            replicates_used: draws.len(),
        })
    };
    Ok(LosSummary {
        death: summarise(EventCause::Death, point_death, |r| r.0),
        discharge: summarise(EventCause::Discharge, point_discharge, |r| r.1),
    })
}

/// Median and bootstrap interval for one cause.
pub fn median_los_for_cause(
    records: &[AnalysisRecord],
    cause: EventCause,
    config: &BootstrapConfig,
) -> Result<MedianLosEstimate> {
    let summary = median_los(records, config)?;
    let est = match cause {
        EventCause::Death => summary.death,
        EventCause::Discharge => summary.discharge,
        EventCause::Censored => return Err(Error::validation("censoring has no length of stay")),
    };
    est.ok_or(Error::NoEventsOfCause(cause.name()))
}
