use serde::{Deserialize, Serialize};

use crate::cohort::EventCause;
use crate::error::{Error, Result};
use crate::nonparametric::Observation;

/// Kaplan-Meier estimate `G(t)` of remaining uncensored past `t`.
///
/// Censorings are the events of this estimator. Where a death or discharge
/// ties with a censoring, the death or discharge leaves the risk set first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringKm {
    /// Distinct censoring times.
    pub times: Vec<f64>,
    /// `G` just after each censoring time.
    pub values: Vec<f64>,
}

impl CensoringKm {
    /// `G = 1` everywhere.
    pub fn none() -> Self {
        CensoringKm {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn estimate(observations: &[Observation]) -> Self {
        let mut sorted: Vec<Observation> = observations.to_vec();
        sorted.sort_by(Observation::canonical_cmp);
        let mut remaining: f64 = sorted.iter().map(|o| o.weight).sum();
        let mut km = CensoringKm::none();
        let mut g = 1.0;
        let mut i = 0;
        while i < sorted.len() {
            let t = sorted[i].time;
            let (mut events, mut censored) = (0.0, 0.0);
            while i < sorted.len() && sorted[i].time == t {
                match sorted[i].event {
                    EventCause::Censored => censored += sorted[i].weight,
                    _ => events += sorted[i].weight,
                }
                i += 1;
            }
            let at_risk = remaining - events;
            if censored > 0.0 {
                g *= 1.0 - censored / at_risk;
                km.times.push(t);
                km.values.push(g.max(0.0));
            }
            remaining -= events + censored;
        }
        km
    }

    /// Right-continuous value `G(t)`.
    pub fn at(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x <= t);
        k.checked_sub(1).map_or(1.0, |k| self.values[k])
    }

    /// Left limit `G(t-)`.
    pub fn left(&self, t: f64) -> f64 {
        let k = self.times.partition_point(|&x| x < t);
        k.checked_sub(1).map_or(1.0, |k| self.values[k])
    }

    /// Number of distinct censoring times.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Subdistribution risk-set weight of `subject` at death time `t`.
pub fn fg_weight(subject: &Observation, t: f64, g: &CensoringKm) -> Result<f64> {
    if subject.time >= t {
        return Ok(1.0);
    }
    match subject.event {
        EventCause::Censored => Ok(0.0),
        EventCause::Death => Ok(0.0),
        EventCause::Discharge => {
            let denom = g.left(subject.time);
            if denom <= 0.0 {
                return Err(Error::CensoringSupportExhausted { time: subject.time });
            }
            Ok(g.left(t) / denom)
        }
    }
}
